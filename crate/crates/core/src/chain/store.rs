//! Validated chain container and its on-disk formats.
//!
//! Binary chain file:
//!
//! ```text
//! magic  "CSCH"          4 bytes
//! version u32 LE          currently 1
//! record*                 u32 LE length ‖ block bytes
//! block bytes             prev_hash(32) ‖ merkle_root(32) ‖ timestamp u64 ‖ height u64
//!                         ‖ tx_count u32 ‖ (u32 len ‖ tx bytes)*
//! tx bytes                nonce u64 ‖ n_in u32 ‖ (height u64 ‖ tx_index u32 ‖ output_index u32
//!                         ‖ owner(32) ‖ auth(32))* ‖ n_out u32 ‖ (value u64 ‖ owner(32))*
//! ```

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::codec::Reader;
use super::{Block, BlockHeader, ChainError, ChainState, DecodeError, Hash32};

pub const CHAIN_FILE_MAGIC: &[u8; 4] = b"CSCH";
const CHAIN_FILE_VERSION: u32 = 1;

/// A single best chain whose every block has been applied successfully.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
    state: ChainState,
}

impl Default for Chain {
    fn default() -> Self {
        Self {
            blocks: Vec::new(),
            state: ChainState::genesis(),
        }
    }
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_blocks(blocks: impl IntoIterator<Item = Block>) -> Result<Self, ChainError> {
        let mut chain = Self::new();
        for b in blocks {
            chain.push(b)?;
        }
        Ok(chain)
    }

    pub fn push(&mut self, block: Block) -> Result<(), ChainError> {
        self.state.apply_block_mut(&block)?;
        self.blocks.push(block);
        Ok(())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_height(&self) -> Option<u64> {
        self.state.height()
    }

    pub fn tip(&self) -> Option<&BlockHeader> {
        self.blocks.last().map(|b| &b.header)
    }

    /// UTXO state at the tip.
    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn headers(&self) -> Vec<BlockHeader> {
        self.blocks.iter().map(|b| b.header).collect()
    }

    pub fn find_header(&self, hash: &Hash32) -> Option<&BlockHeader> {
        self.blocks.iter().map(|b| &b.header).find(|h| h.hash() == *hash)
    }

    /// Depth of a height, with the tip at depth 1.
    pub fn depth_of(&self, height: u64) -> Option<u64> {
        let tip = self.tip_height()?;
        (height <= tip).then(|| tip - height + 1)
    }

    /// Replays blocks `0..=height` from scratch.
    pub fn state_at(&self, height: u64) -> Result<ChainState, ChainError> {
        let mut s = ChainState::genesis();
        for b in self.blocks.iter().take(height as usize + 1) {
            s.apply_block_mut(b)?;
        }
        Ok(s)
    }

    pub fn total_outputs(&self) -> usize {
        self.blocks.iter().map(Block::output_count).sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHAIN_FILE_MAGIC)?;
        w.write_all(&CHAIN_FILE_VERSION.to_le_bytes())?;
        for b in &self.blocks {
            let bytes = b.serialize();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(&bytes)?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses and re-validates every block.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != CHAIN_FILE_MAGIC || r.u32()? != CHAIN_FILE_VERSION {
            return Err(DecodeError::BadMagic.into());
        }
        let mut chain = Self::new();
        while r.remaining() > 0 {
            let record = r.len_prefixed()?;
            chain.push(Block::deserialize(record)?)?;
        }
        Ok(chain)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ChainError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|_| DecodeError::Truncated { offset: buf.len() })?;
        Self::from_bytes(&buf)
    }

    /// Line-oriented dump: `height:index id in=h.t.o,... out=value@owner,...`.
    pub fn text_dump(&self) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            for (i, tx) in b.body.iter().enumerate() {
                let ins: Vec<String> = tx
                    .inputs
                    .iter()
                    .map(|x| format!("{}.{}.{}", x.prev.height, x.prev.tx_index, x.prev.output_index))
                    .collect();
                let outs: Vec<String> = tx
                    .outputs
                    .iter()
                    .map(|o| format!("{}@{}", o.value, &Hash32(o.owner.0).to_hex()[..16]))
                    .collect();
                let _ = writeln!(
                    s,
                    "{}:{} {} in={} out={}",
                    b.header.height,
                    i,
                    tx.id(),
                    if ins.is_empty() { "-".to_string() } else { ins.join(",") },
                    outs.join(",")
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Address, Transaction, BLOCK_REWARD};

    fn small_chain(n: u64) -> Chain {
        let mut c = Chain::new();
        for h in 0..n {
            let body = vec![Transaction::coinbase(h, Address::from_seed(h), BLOCK_REWARD)];
            let b = Block::assemble(c.tip(), h, body);
            c.push(b).unwrap();
        }
        c
    }

    #[test]
    fn file_round_trip() {
        let c = small_chain(5);
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], CHAIN_FILE_MAGIC);
        assert_eq!(Chain::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = small_chain(1).to_bytes();
        bytes[0] = b'X';
        assert_eq!(Chain::from_bytes(&bytes), Err(ChainError::Decode(DecodeError::BadMagic)));
    }

    #[test]
    fn depth_convention() {
        let c = small_chain(10);
        assert_eq!(c.depth_of(9), Some(1));
        assert_eq!(c.depth_of(0), Some(10));
        assert_eq!(c.depth_of(10), None);
    }

    #[test]
    fn dump_has_one_line_per_tx() {
        let c = small_chain(3);
        let dump = c.text_dump();
        assert_eq!(dump.lines().count(), 3);
        assert!(dump.lines().next().unwrap().starts_with("0:0 "));
        assert!(dump.contains(" in=- "));
    }
}
