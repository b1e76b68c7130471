use std::collections::BTreeSet;

use rand::Rng;

use super::{xor_into, CodingError, DegreeDistribution, SegmentSpec};
use crate::chain::{Hash32, Transaction, TxId};

/// XOR of the member payloads plus the sorted member ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    pub payload: Vec<u8>,
    pub members: Vec<TxId>,
}

impl Codeword {
    pub fn degree(&self) -> usize {
        self.members.len()
    }

    /// `payload_len u32 ‖ degree u32 ‖ ids ‖ payload`, little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 * self.members.len() + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.members.len() as u32).to_le_bytes());
        for m in &self.members {
            out.extend_from_slice(&m.0);
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodingError> {
        let wire = |m: &str| CodingError::Wire(m.to_string());
        if bytes.len() < 8 {
            return Err(wire("header truncated"));
        }
        let payload_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let degree = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = degree
            .checked_mul(32)
            .and_then(|n| n.checked_add(8 + payload_len))
            .ok_or_else(|| wire("length overflow"))?;
        if bytes.len() != expected {
            return Err(CodingError::Wire(format!("expected {expected} bytes, got {}", bytes.len())));
        }
        let members: Vec<TxId> = bytes[8..8 + 32 * degree]
            .chunks_exact(32)
            .map(|c| Hash32(c.try_into().unwrap()))
            .collect();
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(wire("member ids not strictly sorted"));
        }
        Ok(Self {
            payload: bytes[8 + 32 * degree..].to_vec(),
            members,
        })
    }

    /// Bytes on the wire.
    pub fn wire_len(&self) -> usize {
        8 + 32 * self.members.len() + self.payload.len()
    }
}

/// XORs the zero-padded payloads of `stored` into one codeword.
pub fn make_codeword(stored: &[Transaction], payload_len: usize) -> Result<Codeword, CodingError> {
    if stored.is_empty() {
        return Err(CodingError::EmptyCodeword);
    }
    let mut payload = vec![0u8; payload_len];
    let mut members = BTreeSet::new();
    for tx in stored {
        let p = tx.to_payload();
        if p.len() > payload_len {
            return Err(CodingError::PayloadTooSmall {
                needed: p.len(),
                payload_len,
            });
        }
        if !members.insert(tx.id()) {
            return Err(CodingError::DuplicateMember);
        }
        xor_into(&mut payload, &p);
    }
    Ok(Codeword {
        payload,
        members: members.into_iter().collect(),
    })
}

/// Positions (into the segment) a coding node keeps: a degree drawn from
/// `dist`, then that many distinct positions uniformly at random. Sorted.
pub fn sample_storage_set<R: Rng + ?Sized>(
    spec: &SegmentSpec,
    dist: &DegreeDistribution,
    rng: &mut R,
) -> Vec<usize> {
    let degree = dist.sample(rng).min(spec.k);
    let mut picked = rand::seq::index::sample(rng, spec.k, degree).into_vec();
    picked.sort_unstable();
    picked
}
