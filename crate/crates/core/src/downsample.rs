//! Downsampled node construction and verification on partial history.
//!
//! A [`DsnProfile`] keeps all headers, the bodies of its reserved heights and
//! the UTXO pool those bodies generate. Outputs referenced by any reserved
//! transaction are provably spent; outputs created in reserved bodies and not
//! referenced there form the pool. Inputs outside both sets point into
//! history the node does not hold and are reported as unknown (and are not
//! broadcast).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::chain::{Block, BlockHeader, Chain, OutPoint, RejectReason, Transaction, TxId, TxOutput};
use crate::entropy::{block_entropy_h, DurationModel};
use crate::exec::{map_slice, Execution};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DownsampleError {
    #[error("delta {delta} outside 1..={blocks}")]
    BadDelta { delta: usize, blocks: usize },
    #[error("csv output: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Uniform,
    Entropy,
    LatestSuffix,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Uniform => "uniform",
            Policy::Entropy => "entropy",
            Policy::LatestSuffix => "latest-suffix",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Policy::Uniform),
            "entropy" => Ok(Policy::Entropy),
            "latest-suffix" => Ok(Policy::LatestSuffix),
            other => Err(format!("unknown policy {other:?} (uniform|entropy|latest-suffix)")),
        }
    }
}

/// UTXO knowledge generated from reserved bodies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UtxoPool {
    pub unspent: BTreeMap<OutPoint, TxOutput>,
    pub spent: BTreeSet<OutPoint>,
    pub processed: BTreeSet<TxId>,
}

impl UtxoPool {
    pub fn from_bodies<'a>(bodies: impl IntoIterator<Item = &'a Block>) -> Self {
        let mut pool = Self::default();
        for b in bodies {
            let h = b.header.height;
            for (ti, tx) in b.body.iter().enumerate() {
                for i in &tx.inputs {
                    pool.unspent.remove(&i.prev);
                    pool.spent.insert(i.prev);
                }
                for (oi, o) in tx.outputs.iter().enumerate() {
                    pool.unspent.insert(OutPoint::new(h, ti as u32, oi as u32), *o);
                }
                pool.processed.insert(tx.id());
            }
        }
        pool
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsnProfile {
    headers: Vec<BlockHeader>,
    bodies: BTreeMap<u64, Block>,
    pool: UtxoPool,
    policy: Policy,
}

impl DsnProfile {
    /// Builds a profile from an explicit reserved set.
    pub fn from_reserved(
        chain: &Chain,
        reserved: impl IntoIterator<Item = u64>,
        policy: Policy,
    ) -> Result<Self, DownsampleError> {
        let bodies: BTreeMap<u64, Block> = reserved
            .into_iter()
            .filter_map(|h| chain.block(h).map(|b| (h, b.clone())))
            .collect();
        if bodies.is_empty() {
            return Err(DownsampleError::BadDelta {
                delta: 0,
                blocks: chain.len(),
            });
        }
        let pool = UtxoPool::from_bodies(bodies.values());
        Ok(Self {
            headers: chain.headers(),
            bodies,
            pool,
            policy,
        })
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn reserved_heights(&self) -> BTreeSet<u64> {
        self.bodies.keys().copied().collect()
    }

    pub fn delta(&self) -> usize {
        self.bodies.len()
    }

    pub fn body(&self, height: u64) -> Option<&Block> {
        self.bodies.get(&height)
    }

    pub fn bodies(&self) -> impl Iterator<Item = &Block> {
        self.bodies.values()
    }

    pub fn pool(&self) -> &UtxoPool {
        &self.pool
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn tip_height(&self) -> u64 {
        self.headers.len() as u64 - 1
    }

    /// Depths (tip = 1) of the reserved bodies.
    pub fn reserved_depths(&self) -> Vec<u64> {
        let tip = self.tip_height();
        self.bodies.keys().map(|h| tip - h + 1).collect()
    }

    /// Whether the reserved set is exactly the most recent `delta` blocks.
    pub fn is_latest_suffix(&self) -> bool {
        let tip = self.tip_height();
        self.bodies.keys().next().is_some_and(|&lo| tip + 1 - lo == self.bodies.len() as u64)
    }

    /// Holds a transaction body with this id.
    pub fn find_tx(&self, id: &TxId) -> Option<&Transaction> {
        if !self.pool.processed.contains(id) {
            return None;
        }
        self.bodies.values().flat_map(|b| b.body.iter()).find(|t| t.id() == *id)
    }
}

fn check_delta(chain: &Chain, delta: usize) -> Result<(), DownsampleError> {
    if delta == 0 || delta > chain.len() {
        Err(DownsampleError::BadDelta {
            delta,
            blocks: chain.len(),
        })
    } else {
        Ok(())
    }
}

/// `δ = ceil(d_max / M)`, at least 1.
pub fn delta_from_factor(d_max: usize, factor: usize) -> usize {
    d_max.div_ceil(factor.max(1)).max(1)
}

/// Reserves `delta` heights drawn uniformly without replacement.
pub fn build_dsn_uniform<R: Rng + ?Sized>(
    chain: &Chain,
    delta: usize,
    rng: &mut R,
) -> Result<DsnProfile, DownsampleError> {
    check_delta(chain, delta)?;
    let picks = rand::seq::index::sample(rng, chain.len(), delta);
    DsnProfile::from_reserved(chain, picks.into_iter().map(|h| h as u64), Policy::Uniform)
}

/// Indices (0-based depth − 1) of the `delta` largest scores; ties go to the
/// smaller depth.
pub fn select_max_entropy(scores: &[f64], delta: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(delta);
    idx
}

/// Reserves the `delta` bodies with the largest block entropy `H(depth)`.
pub fn build_dsn_entropy(
    chain: &Chain,
    model: &DurationModel,
    delta: usize,
) -> Result<DsnProfile, DownsampleError> {
    check_delta(chain, delta)?;
    let n = chain.len();
    let scores: Vec<f64> = (1..=n)
        .map(|d| block_entropy_h(model, d as f64).expect("depth is positive"))
        .collect();
    let tip = n as u64 - 1;
    let heights = select_max_entropy(&scores, delta)
        .into_iter()
        .map(|i| tip - i as u64);
    DsnProfile::from_reserved(chain, heights, Policy::Entropy)
}

/// Reserves the `delta` most recent bodies.
pub fn build_dsn_latest(chain: &Chain, delta: usize) -> Result<DsnProfile, DownsampleError> {
    check_delta(chain, delta)?;
    let tip = chain.len() as u64 - 1;
    DsnProfile::from_reserved(chain, (tip + 1 - delta as u64)..=tip, Policy::LatestSuffix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DsnVerdict {
    Accept,
    Reject(RejectReason),
    /// An input points into history the node does not hold.
    UnknownInput,
}

impl DsnVerdict {
    pub fn broadcasts(self) -> bool {
        self == DsnVerdict::Accept
    }
}

/// Transaction verification against a partial pool.
///
/// Checks run in the same order as full verification. The input check
/// rejects inputs that are provably spent (or name a non-existent output in
/// a reserved body) and reports inputs into unreserved history as unknown.
pub fn verify_transaction_dsn(dsn: &DsnProfile, t: &Transaction) -> DsnVerdict {
    use DsnVerdict::*;
    if t.is_coinbase() || !t.is_well_formed() {
        return Reject(RejectReason::Malformed);
    }
    if dsn.pool.processed.contains(&t.id()) {
        return Reject(RejectReason::AlreadyProcessed);
    }
    let addrs = t.inputs.iter().map(|i| &i.owner).chain(t.outputs.iter().map(|o| &o.owner));
    if !addrs.into_iter().all(|a| a.is_well_formed()) {
        return Reject(RejectReason::BadAddress);
    }
    let digest = t.signing_digest();
    for i in &t.inputs {
        if i.auth != crate::chain::ownership_token(&i.owner, &digest)
            || dsn.pool.unspent.get(&i.prev).is_some_and(|o| o.owner != i.owner)
        {
            return Reject(RejectReason::BadOwner);
        }
    }
    let mut total_in: u128 = 0;
    let mut unknown = false;
    for i in &t.inputs {
        if dsn.pool.spent.contains(&i.prev) {
            return Reject(RejectReason::NotUtxo);
        }
        match dsn.pool.unspent.get(&i.prev) {
            Some(o) => total_in += o.value as u128,
            None if dsn.bodies.contains_key(&i.prev.height) => return Reject(RejectReason::NotUtxo),
            None => unknown = true,
        }
    }
    if unknown {
        return UnknownInput;
    }
    if total_in < t.total_out() {
        return Reject(RejectReason::Overspend);
    }
    Accept
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// All outputs on the chain.
    pub n_t: usize,
    /// All UTXOs at the tip.
    pub n_u: usize,
    /// Outputs held in reserved bodies.
    pub n_st: usize,
    /// Tip UTXOs held in reserved bodies.
    pub n_su: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub unknown: usize,
    /// Fraction of the workload broadcast.
    pub phi: f64,
    /// `(height, accuracy)` per equal workload slice.
    pub series: Vec<(u64, f64)>,
}

impl AccuracyReport {
    /// `N_su / N_u`.
    pub fn static_phi(&self) -> f64 {
        if self.n_u == 0 {
            0.0
        } else {
            self.n_su as f64 / self.n_u as f64
        }
    }

    pub fn workload_len(&self) -> usize {
        self.accepted + self.rejected + self.unknown
    }
}

/// Runs every workload transaction through [`verify_transaction_dsn`].
///
/// The series splits the workload into `slices` consecutive, equally sized
/// chunks, labeled with the heights of the blocks that would carry them.
pub fn measure_accuracy(
    chain: &Chain,
    dsn: &DsnProfile,
    workload: &[Transaction],
    slices: usize,
    exec: Execution,
) -> AccuracyReport {
    let verdicts = map_slice(exec, workload, |t| verify_transaction_dsn(dsn, t));
    let accepted = verdicts.iter().filter(|v| v.broadcasts()).count();
    let unknown = verdicts.iter().filter(|v| **v == DsnVerdict::UnknownInput).count();
    let rejected = verdicts.len() - accepted - unknown;

    let tip = chain.tip_height().unwrap_or(0);
    let slices = slices.clamp(1, verdicts.len().max(1));
    let per = verdicts.len().div_ceil(slices).max(1);
    let series = verdicts
        .chunks(per)
        .enumerate()
        .map(|(i, chunk)| {
            let ok = chunk.iter().filter(|v| v.broadcasts()).count();
            (tip + 1 + i as u64, ok as f64 / chunk.len() as f64)
        })
        .collect();

    let reserved = dsn.reserved_heights();
    let n_su = chain
        .state()
        .utxos()
        .keys()
        .filter(|op| reserved.contains(&op.height))
        .count();
    AccuracyReport {
        n_t: chain.total_outputs(),
        n_u: chain.state().utxos().len(),
        n_st: dsn.bodies().map(Block::output_count).sum(),
        n_su,
        accepted,
        rejected,
        unknown,
        phi: if verdicts.is_empty() {
            0.0
        } else {
            accepted as f64 / verdicts.len() as f64
        },
        series,
    }
}

/// One row of the average-accuracy CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub policy: Policy,
    pub factor: usize,
    pub delta: usize,
    pub phi_avg: f64,
}

/// `policy,M,delta,phi_avg`.
pub fn write_accuracy_csv<W: Write>(w: W, rows: &[AccuracyRow]) -> Result<(), DownsampleError> {
    let err = |e: csv::Error| DownsampleError::Csv(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["policy", "M", "delta", "phi_avg"]).map_err(err)?;
    for r in rows {
        out.write_record([
            r.policy.to_string(),
            r.factor.to_string(),
            r.delta.to_string(),
            format!("{:.6}", r.phi_avg),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| DownsampleError::Csv(e.to_string()))
}

/// `height,phi_realtime`.
pub fn write_series_csv<W: Write>(w: W, series: &[(u64, f64)]) -> Result<(), DownsampleError> {
    let err = |e: csv::Error| DownsampleError::Csv(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["height", "phi_realtime"]).map_err(err)?;
    for (h, p) in series {
        out.write_record([h.to_string(), format!("{p:.6}")]).map_err(err)?;
    }
    out.flush().map_err(|e| DownsampleError::Csv(e.to_string()))
}
