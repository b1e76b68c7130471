use std::collections::{BTreeMap, HashMap};

use super::{payload_matches, xor_into, Codeword, CodingError, DecodeOutcome, SegmentSpec};
use crate::chain::TxId;

struct Row {
    bits: Vec<u64>,
    payload: Vec<u8>,
    origin: usize,
}

impl Row {
    fn get(&self, col: usize) -> bool {
        self.bits[col / 64] >> (col % 64) & 1 == 1
    }

    fn absorb(&mut self, other: &Row) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a ^= b;
        }
        xor_into(&mut self.payload, &other.payload);
    }

    fn popcount(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }
}

/// Gaussian elimination over GF(2). Slow, but recovers every transaction the
/// codewords determine, so it bounds what peeling can achieve.
pub fn gauss_decode_oracle(spec: &SegmentSpec, codewords: &[Codeword]) -> Result<DecodeOutcome, CodingError> {
    let k = spec.k;
    let words = k.div_ceil(64);
    let index: HashMap<TxId, usize> = spec.tx_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut rows = Vec::with_capacity(codewords.len());
    for (n, cw) in codewords.iter().enumerate() {
        if cw.members.is_empty() {
            return Err(CodingError::EmptyCodeword);
        }
        if cw.members.len() > k {
            return Err(CodingError::DegreeTooLarge {
                degree: cw.members.len(),
                k,
            });
        }
        if cw.payload.len() != spec.payload_len {
            return Err(CodingError::PayloadLength {
                got: cw.payload.len(),
                expected: spec.payload_len,
            });
        }
        let mut row = Row {
            bits: vec![0; words],
            payload: cw.payload.clone(),
            origin: n,
        };
        for id in &cw.members {
            let col = *index.get(id).ok_or(CodingError::ForeignMember { id: *id })?;
            if row.get(col) {
                return Err(CodingError::DuplicateMember);
            }
            row.bits[col / 64] |= 1 << (col % 64);
        }
        rows.push(row);
    }

    let mut xor_ops = 0u64;
    let mut rank = 0;
    let mut pivot_of = vec![None; k];
    #[allow(clippy::needless_range_loop)]
    for col in 0..k {
        let Some(found) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
            continue;
        };
        rows.swap(rank, found);
        let (head, tail) = rows.split_at_mut(rank);
        let (pivot, tail) = tail.split_first_mut().expect("pivot row exists");
        for row in head.iter_mut().chain(tail.iter_mut()) {
            if row.get(col) {
                row.absorb(pivot);
                xor_ops += 1;
            }
        }
        pivot_of[col] = Some(rank);
        rank += 1;
    }

    for row in &rows[rank..] {
        if row.payload.iter().any(|&b| b != 0) {
            let tx = codewords[row.origin].members[0];
            return Err(CodingError::CorruptCodeword { codeword: row.origin, tx });
        }
    }

    let mut decoded = BTreeMap::new();
    let mut undecoded = Vec::new();
    let mut order = Vec::new();
    for (col, pivot) in pivot_of.iter().enumerate() {
        let id = spec.tx_ids[col];
        match pivot.map(|r| &rows[r]) {
            Some(row) if row.popcount() == 1 => {
                if !payload_matches(&row.payload, &id) {
                    return Err(CodingError::CorruptCodeword {
                        codeword: row.origin,
                        tx: id,
                    });
                }
                decoded.insert(id, row.payload.clone());
                order.push(col);
            }
            _ => undecoded.push(id),
        }
    }
    Ok(DecodeOutcome {
        decoded,
        undecoded,
        order,
        xor_ops,
        max_xor_per_codeword: 0,
    })
}
