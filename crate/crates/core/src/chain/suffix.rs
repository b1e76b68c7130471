//! UTXO knowledge derivable from a contiguous run of recent blocks.
//!
//! If an output created at or before height k is referenced by some
//! transaction in blocks k+1..=t it is spent; if it is not referenced there
//! (and was unspent at k) it is still unspent at t. Outputs created inside
//! the suffix and not spent inside it form a pool that is always a subset of
//! the true UTXO set at t.

use std::collections::{BTreeMap, BTreeSet};

use super::{hash_header, Block, ChainError, OutPoint, TxOutput};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuffixClassification {
    /// Candidates referenced by some transaction in the suffix.
    pub spent: BTreeSet<OutPoint>,
    /// Candidates never referenced in the suffix.
    pub unspent: BTreeSet<OutPoint>,
    /// Outputs created inside the suffix and not spent inside it.
    pub pool: BTreeMap<OutPoint, TxOutput>,
}

/// Classifies `candidates` against the suffix `blocks` and builds the
/// suffix-generated pool.
///
/// `unspent` is only meaningful for candidates that were themselves unspent
/// just before the suffix starts.
pub fn derive_suffix_utxos(
    blocks: &[Block],
    candidates: &[OutPoint],
) -> Result<SuffixClassification, ChainError> {
    for pair in blocks.windows(2) {
        let (a, b) = (&pair[0].header, &pair[1].header);
        if b.height != a.height + 1 || b.prev_hash != hash_header(a) {
            return Err(ChainError::GapInSuffix { after: a.height });
        }
    }
    let first = blocks.first().map(|b| b.header.height);
    if let Some(first) = first {
        if let Some(c) = candidates.iter().find(|c| c.height >= first) {
            return Err(ChainError::CandidateNotBeforeSuffix { candidate: *c });
        }
    }

    let mut referenced = BTreeSet::new();
    let mut pool = BTreeMap::new();
    for b in blocks {
        for (ti, tx) in b.body.iter().enumerate() {
            for i in &tx.inputs {
                referenced.insert(i.prev);
                pool.remove(&i.prev);
            }
            for (oi, o) in tx.outputs.iter().enumerate() {
                pool.insert(OutPoint::new(b.header.height, ti as u32, oi as u32), *o);
            }
        }
    }

    let (spent, unspent) = candidates.iter().partition(|c| referenced.contains(c));
    Ok(SuffixClassification {
        spent,
        unspent,
        pool,
    })
}
