//! Transparent coding: nodes store plain transactions and only XOR them into
//! codewords when a peer asks for help recovering a segment.

mod codeword;
mod curve;
mod degree;
mod gauss;
mod peel;

use std::collections::HashSet;

use thiserror::Error;

use crate::chain::{Address, OutPoint, Transaction, TxId, TxOutput};

pub use codeword::{make_codeword, sample_storage_set, Codeword};
pub use curve::{recovery_overhead_curve, RecoveryCurve};
pub use degree::{
    coupon_bound, ideal_soliton, robust_soliton, write_distribution_csv, DegreeDistribution,
    RobustSoliton,
};
pub use gauss::gauss_decode_oracle;
pub use peel::{peel_decode, DecodeOutcome, PeelingDecoder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("K/S = {ratio} < 1, spike position degenerate")]
    DegenerateSpike { ratio: String },
    #[error("serialized transaction needs {needed} bytes, payload_len is {payload_len}")]
    PayloadTooSmall { needed: usize, payload_len: usize },
    #[error("codeword has no members")]
    EmptyCodeword,
    #[error("codeword lists a member twice")]
    DuplicateMember,
    #[error("codeword degree {degree} exceeds segment size {k}")]
    DegreeTooLarge { degree: usize, k: usize },
    #[error("member {id:?} is not in the segment")]
    ForeignMember { id: TxId },
    #[error("payload length {got}, expected {expected}")]
    PayloadLength { got: usize, expected: usize },
    #[error("codeword {codeword} decoded to data that does not hash to {tx:?}")]
    CorruptCodeword { codeword: usize, tx: TxId },
    #[error("wire format: {0}")]
    Wire(String),
}

/// Parameters of one recovery unit of `k` transactions.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec {
    pub k: usize,
    pub epsilon: f64,
    pub c: f64,
    pub tx_ids: Vec<TxId>,
    pub payload_len: usize,
}

impl SegmentSpec {
    pub fn new(tx_ids: Vec<TxId>, epsilon: f64, c: f64, payload_len: usize) -> Result<Self, CodingError> {
        let k = tx_ids.len();
        if k == 0 {
            return Err(CodingError::BadParams("segment must hold at least one transaction".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CodingError::BadParams(format!("epsilon {epsilon} not in (0,1)")));
        }
        if !(c > 0.0) {
            return Err(CodingError::BadParams(format!("c {c} must be positive")));
        }
        let distinct: HashSet<&TxId> = tx_ids.iter().collect();
        if distinct.len() != k {
            return Err(CodingError::DuplicateMember);
        }
        Ok(Self {
            k,
            epsilon,
            c,
            tx_ids,
            payload_len,
        })
    }
}

/// Rounds the largest payload up to a multiple of 64 bytes.
pub fn padded_len(txs: &[Transaction]) -> usize {
    let max = txs.iter().map(|t| t.to_payload().len()).max().unwrap_or(0);
    max.div_ceil(64).max(1) * 64
}

/// A segment's transactions with their zero-padded payloads.
#[derive(Debug, Clone)]
pub struct Segment {
    pub spec: SegmentSpec,
    pub txs: Vec<Transaction>,
    payloads: Vec<Vec<u8>>,
}

impl Segment {
    pub fn new(txs: Vec<Transaction>, epsilon: f64, c: f64) -> Result<Self, CodingError> {
        let payload_len = padded_len(&txs);
        let spec = SegmentSpec::new(txs.iter().map(Transaction::id).collect(), epsilon, c, payload_len)?;
        let payloads = txs
            .iter()
            .map(|t| {
                let mut p = t.to_payload();
                p.resize(payload_len, 0);
                p
            })
            .collect();
        Ok(Self { spec, txs, payloads })
    }

    /// `k` distinct transactions of varying shape; not tied to any chain.
    pub fn synthetic(k: usize, epsilon: f64, c: f64, seed: u64) -> Result<Self, CodingError> {
        let txs = (0..k as u64)
            .map(|i| {
                let n_in = 1 + (i % 3) as usize;
                let n_out = 1 + ((i / 3) % 2) as usize;
                let inputs: Vec<(OutPoint, Address)> = (0..n_in)
                    .map(|j| (OutPoint::new(i, j as u32, 0), Address::from_seed(seed ^ (i * 7 + j as u64))))
                    .collect();
                let outputs = (0..n_out)
                    .map(|j| TxOutput {
                        value: 1000 + i * 3 + j as u64,
                        owner: Address::from_seed(seed.wrapping_add(i * 11 + j as u64)),
                    })
                    .collect();
                Transaction::spend(seed.wrapping_mul(1_000_003).wrapping_add(i), &inputs, outputs)
            })
            .collect();
        Self::new(txs, epsilon, c)
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn payload(&self, index: usize) -> &[u8] {
        &self.payloads[index]
    }

    /// XOR codeword over segment positions (which must be distinct).
    pub fn codeword_for(&self, positions: &[usize]) -> Codeword {
        let mut payload = vec![0u8; self.spec.payload_len];
        for &p in positions {
            xor_into(&mut payload, &self.payloads[p]);
        }
        let mut members: Vec<TxId> = positions.iter().map(|&p| self.spec.tx_ids[p]).collect();
        members.sort();
        Codeword { payload, members }
    }
}

pub(crate) fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Checks a decoded payload: it must parse, hash to `id`, and be zero past
/// the serialized transaction.
pub(crate) fn payload_matches(payload: &[u8], id: &TxId) -> bool {
    match Transaction::from_payload(payload) {
        Ok(tx) => {
            let used = tx.to_payload().len();
            tx.id() == *id && payload[used..].iter().all(|&b| b == 0)
        }
        Err(_) => false,
    }
}
