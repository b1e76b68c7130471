//! UTXO-model blockchain state machine.
//!
//! Blocks are hash-chained through their headers and commit to their bodies
//! with a Merkle root over transaction ids. [`ChainState`] is the UTXO set
//! plus the set of processed transaction ids; it advances one transaction
//! (or one block) at a time and never mutates a value it has handed out.
//!
//! Signatures are not modeled. Address validity and input ownership are
//! checked by deterministic hash stubs (see [`Address`] and
//! [`Transaction::authorize`]) so that the verification order still has a
//! failing case for every check.

mod codec;
mod merkle;
mod state;
mod store;
mod suffix;
mod types;

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use merkle::merkle_root;
pub use state::{apply_block, apply_transaction, verify_transaction_full, ChainState, RejectReason};
pub use store::{Chain, CHAIN_FILE_MAGIC};
pub use suffix::{derive_suffix_utxos, SuffixClassification};
pub use types::{hash_header, ownership_token, Block, BlockHeader, OutPoint, Transaction, TxInput, TxOutput};

/// Fixed coinbase reward. There is no fee accounting.
pub const BLOCK_REWARD: u64 = 50_000;

/// 256-bit digest.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hash32(pub [u8; 32]);

/// Transaction identifier: SHA-256 of the canonical serialization.
pub type TxId = Hash32;

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16)?;
            let lo = (chunk[1] as char).to_digit(16)?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Some(Hash32(out))
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..16])
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub(crate) fn sha256(parts: &[&[u8]]) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash32(h.finalize().into())
}

/// Owner address: 28 identifying bytes followed by a 4-byte checksum.
///
/// An address is well formed iff the checksum equals the first four bytes
/// of SHA-256 over the leading 28 bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 32]);

impl Address {
    /// Deterministic well-formed address for a numeric seed.
    pub fn from_seed(seed: u64) -> Self {
        let body = sha256(&[b"address", &seed.to_le_bytes()]);
        let mut out = [0u8; 32];
        out[..28].copy_from_slice(&body.0[..28]);
        let check = sha256(&[&out[..28]]);
        out[28..].copy_from_slice(&check.0[..4]);
        Address(out)
    }

    pub fn is_well_formed(&self) -> bool {
        let check = sha256(&[&self.0[..28]]);
        self.0[28..] == check.0[..4]
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "addr:{}", &Hash32(self.0).to_hex()[..12])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("{extra} trailing bytes after record")]
    TrailingBytes { extra: usize },
    #[error("bad magic or version in chain file")]
    BadMagic,
    #[error("record length {len} exceeds remaining input")]
    BadLength { len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("block body is empty")]
    EmptyBody,
    #[error("header at height {height} does not extend the current tip")]
    BadChain { height: u64 },
    #[error("merkle root mismatch at height {height}")]
    BadMerkle { height: u64 },
    #[error("invalid transition at tx index {index:?}: {reason}")]
    InvalidTransition {
        index: Option<usize>,
        reason: RejectReason,
    },
    #[error("suffix is not contiguous after height {after}")]
    GapInSuffix { after: u64 },
    #[error("candidate {candidate:?} is not older than the suffix")]
    CandidateNotBeforeSuffix { candidate: OutPoint },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}
