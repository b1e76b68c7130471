use std::collections::BTreeSet;

use super::codec::{Reader, Writer};
use super::{sha256, Address, DecodeError, Hash32, TxId};

/// Position of a confirmed output: (block height, tx index, output index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutPoint {
    pub height: u64,
    pub tx_index: u32,
    pub output_index: u32,
}

impl OutPoint {
    pub fn new(height: u64, tx_index: u32, output_index: u32) -> Self {
        Self {
            height,
            tx_index,
            output_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxOutput {
    pub value: u64,
    pub owner: Address,
}

/// Reference to a prior output together with the spender's claimed address
/// and ownership token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TxInput {
    pub prev: OutPoint,
    pub owner: Address,
    pub auth: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    /// Disambiguates otherwise identical transactions; coinbases carry their height.
    pub nonce: u64,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
}

impl Transaction {
    pub fn coinbase(height: u64, owner: Address, reward: u64) -> Self {
        Self {
            nonce: height,
            inputs: Vec::new(),
            outputs: vec![TxOutput {
                value: reward,
                owner,
            }],
        }
    }

    /// Builds a spend and fills in every input's ownership token.
    pub fn spend(nonce: u64, inputs: &[(OutPoint, Address)], outputs: Vec<TxOutput>) -> Self {
        let mut tx = Self {
            nonce,
            inputs: inputs
                .iter()
                .map(|&(prev, owner)| TxInput {
                    prev,
                    owner,
                    auth: Hash32::ZERO,
                })
                .collect(),
            outputs,
        };
        tx.authorize();
        tx
    }

    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Recomputes every input token as `SHA256(owner ‖ signing digest)`.
    pub fn authorize(&mut self) {
        let digest = self.signing_digest();
        for input in &mut self.inputs {
            input.auth = ownership_token(&input.owner, &digest);
        }
    }

    /// Digest over everything except the ownership tokens.
    pub fn signing_digest(&self) -> Hash32 {
        sha256(&[&self.encode_inner(false)])
    }

    pub fn id(&self) -> TxId {
        sha256(&[&self.serialize()])
    }

    pub fn total_out(&self) -> u128 {
        self.outputs.iter().map(|o| o.value as u128).sum()
    }

    /// Canonical serialization; the transaction id is its SHA-256.
    pub fn serialize(&self) -> Vec<u8> {
        self.encode_inner(true)
    }

    fn encode_inner(&self, with_auth: bool) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.nonce).u32(self.inputs.len() as u32);
        for i in &self.inputs {
            w.u64(i.prev.height)
                .u32(i.prev.tx_index)
                .u32(i.prev.output_index)
                .bytes(&i.owner.0);
            if with_auth {
                w.bytes(&i.auth.0);
            }
        }
        w.u32(self.outputs.len() as u32);
        for o in &self.outputs {
            w.u64(o.value).bytes(&o.owner.0);
        }
        w.finish()
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read(&mut r)?;
        r.expect_end()?;
        Ok(tx)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let nonce = r.u64()?;
        let n_in = r.u32()? as usize;
        if n_in.saturating_mul(80) > r.remaining() {
            return Err(DecodeError::BadLength { len: n_in });
        }
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            let prev = OutPoint::new(r.u64()?, r.u32()?, r.u32()?);
            let owner = Address(r.hash()?.0);
            let auth = r.hash()?;
            inputs.push(TxInput { prev, owner, auth });
        }
        let n_out = r.u32()? as usize;
        if n_out.saturating_mul(40) > r.remaining() {
            return Err(DecodeError::BadLength { len: n_out });
        }
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let value = r.u64()?;
            let owner = Address(r.hash()?.0);
            outputs.push(TxOutput { value, owner });
        }
        Ok(Self {
            nonce,
            inputs,
            outputs,
        })
    }

    /// Self-delimiting form used as a coding payload: `u32 len ‖ serialization`.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.len_prefixed(&self.serialize());
        w.finish()
    }

    /// Inverse of [`Transaction::to_payload`]; trailing zero padding is ignored.
    pub fn from_payload(payload: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(payload);
        let body = r.len_prefixed()?;
        Self::deserialize(body)
    }

    /// Structural checks independent of any chain state.
    pub(crate) fn is_well_formed(&self) -> bool {
        if self.outputs.is_empty() {
            return false;
        }
        let mut seen = BTreeSet::new();
        self.inputs.iter().all(|i| seen.insert(i.prev))
    }
}

/// Ownership stub: `SHA256("owner" ‖ owner ‖ signing digest)`.
pub fn ownership_token(owner: &Address, digest: &Hash32) -> Hash32 {
    sha256(&[b"owner", &owner.0, &digest.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub prev_hash: Hash32,
    pub merkle_root: Hash32,
    pub timestamp: u64,
    pub height: u64,
}

impl BlockHeader {
    pub const ENCODED_LEN: usize = 80;

    /// `prev_hash ‖ merkle_root ‖ timestamp ‖ height`, little-endian integers.
    pub fn serialize(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.prev_hash.0)
            .bytes(&self.merkle_root.0)
            .u64(self.timestamp)
            .u64(self.height);
        w.finish()
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            prev_hash: r.hash()?,
            merkle_root: r.hash()?,
            timestamp: r.u64()?,
            height: r.u64()?,
        })
    }

    pub fn hash(&self) -> Hash32 {
        hash_header(self)
    }
}

pub fn hash_header(header: &BlockHeader) -> Hash32 {
    sha256(&[&header.serialize()])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub body: Vec<Transaction>,
}

impl Block {
    /// Assembles a block on top of `prev`, computing the Merkle root.
    ///
    /// Panics if `body` is empty.
    pub fn assemble(prev: Option<&BlockHeader>, timestamp: u64, body: Vec<Transaction>) -> Self {
        let ids: Vec<TxId> = body.iter().map(Transaction::id).collect();
        let merkle_root = super::merkle_root(&ids).expect("block body must not be empty");
        let header = BlockHeader {
            prev_hash: prev.map(hash_header).unwrap_or(Hash32::ZERO),
            merkle_root,
            timestamp,
            height: prev.map(|p| p.height + 1).unwrap_or(0),
        };
        Self { header, body }
    }

    pub fn tx_ids(&self) -> Vec<TxId> {
        self.body.iter().map(Transaction::id).collect()
    }

    /// Whether the header's Merkle root matches the body.
    pub fn commitment_holds(&self) -> bool {
        super::merkle_root(&self.tx_ids()).is_ok_and(|r| r == self.header.merkle_root)
    }

    /// `header ‖ u32 tx count ‖ (u32 len ‖ tx)*`.
    pub fn serialize(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.header.serialize()).u32(self.body.len() as u32);
        for tx in &self.body {
            w.len_prefixed(&tx.serialize());
        }
        w.finish()
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::read(&mut r)?;
        let n = r.u32()? as usize;
        if n.saturating_mul(4) > r.remaining() {
            return Err(DecodeError::BadLength { len: n });
        }
        let mut body = Vec::with_capacity(n);
        for _ in 0..n {
            body.push(Transaction::deserialize(r.len_prefixed()?)?);
        }
        r.expect_end()?;
        Ok(Self { header, body })
    }

    pub fn output_count(&self) -> usize {
        self.body.iter().map(|t| t.outputs.len()).sum()
    }
}
