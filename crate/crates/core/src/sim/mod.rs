//! Message-counting simulation of a downsampled node population.
//!
//! There is no clock. A run is a sequence of recovery requests; every request
//! and response is appended to [`SimMetrics::log`] so byte totals can be
//! recomputed independently.

mod recover;
mod scenario;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::chain::{Chain, Transaction, TxId};
use crate::coding::{sample_storage_set, CodingError, DegreeDistribution, Segment};
use crate::downsample::DsnProfile;

pub use recover::{
    recover_block, recover_segment_coded, recover_segment_uncoded, recover_transaction, ProbeMode,
    SegmentRecovery, UncodedRecovery,
};
pub use scenario::{run_scenario, write_metrics_csv, ScenarioConfig, ScenarioRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad topology: {0}")]
    BadTopology(String),
    #[error("node {0} is dead")]
    RequesterDead(usize),
    #[error("node {0} does not exist")]
    NoSuchNode(usize),
    #[error("header {0} is unknown")]
    UnknownHeader(String),
    #[error("no chain attached to the topology")]
    NoChain,
    #[error("scenario config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Full,
    Dsn,
    CodingDsn,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Full => "full",
            NodeKind::Dsn => "dsn",
            NodeKind::CodingDsn => "coding",
        })
    }
}

/// Fractions of each node kind; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeMix {
    pub full: f64,
    pub dsn: f64,
    pub coding: f64,
}

impl NodeMix {
    pub fn all(kind: NodeKind) -> Self {
        let mut m = NodeMix {
            full: 0.0,
            dsn: 0.0,
            coding: 0.0,
        };
        match kind {
            NodeKind::Full => m.full = 1.0,
            NodeKind::Dsn => m.dsn = 1.0,
            NodeKind::CodingDsn => m.coding = 1.0,
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SimNode {
    pub id: usize,
    pub kind: NodeKind,
    pub dsn: Option<Arc<DsnProfile>>,
    /// Uncoded transactions kept for coded recovery.
    pub stored_txs: Option<Vec<Transaction>>,
    pub alive: bool,
    /// Flips one bit of every response it sends.
    pub byzantine: bool,
}

impl SimNode {
    fn holds_tx(&self, chain: Option<&Chain>, index: &HashMap<TxId, (u64, usize)>, id: &TxId) -> Option<Transaction> {
        match self.kind {
            NodeKind::Full => {
                let (h, i) = index.get(id)?;
                chain?.block(*h).map(|b| b.body[*i].clone())
            }
            NodeKind::Dsn => self.dsn.as_ref()?.find_tx(id).cloned(),
            NodeKind::CodingDsn => self.stored_txs.as_ref()?.iter().find(|t| t.id() == *id).cloned(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimTopology {
    pub nodes: Vec<SimNode>,
    pub neighbors: Vec<Vec<usize>>,
    chain: Option<Arc<Chain>>,
    tx_index: Arc<HashMap<TxId, (u64, usize)>>,
}

/// `m` distinct random neighbors per node and kinds assigned by `mix`.
pub fn build_topology<R: Rng + ?Sized>(
    n_nodes: usize,
    m_neighbors: usize,
    mix: NodeMix,
    rng: &mut R,
) -> Result<SimTopology, SimError> {
    if n_nodes == 0 {
        return Err(SimError::BadTopology("no nodes".into()));
    }
    if m_neighbors >= n_nodes {
        return Err(SimError::BadTopology(format!(
            "{m_neighbors} neighbors need more than {n_nodes} nodes"
        )));
    }
    let fr = [mix.full, mix.dsn, mix.coding];
    if fr.iter().any(|f| !(*f >= 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SimError::BadTopology(format!("mix {fr:?} does not sum to 1")));
    }
    let n_full = (mix.full * n_nodes as f64).round() as usize;
    let n_dsn = (mix.dsn * n_nodes as f64).round() as usize;
    let n_coding = n_nodes
        .checked_sub(n_full + n_dsn)
        .ok_or_else(|| SimError::BadTopology("mix rounds to more than n nodes".into()))?;
    let mut kinds: Vec<NodeKind> = std::iter::repeat_n(NodeKind::Full, n_full)
        .chain(std::iter::repeat_n(NodeKind::Dsn, n_dsn))
        .chain(std::iter::repeat_n(NodeKind::CodingDsn, n_coding))
        .collect();
    kinds.shuffle(rng);

    let neighbors = (0..n_nodes)
        .map(|i| {
            rand::seq::index::sample(rng, n_nodes - 1, m_neighbors)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect();
    let nodes = kinds
        .into_iter()
        .enumerate()
        .map(|(id, kind)| SimNode {
            id,
            kind,
            dsn: None,
            stored_txs: None,
            alive: true,
            byzantine: false,
        })
        .collect();
    Ok(SimTopology {
        nodes,
        neighbors,
        chain: None,
        tx_index: Arc::new(HashMap::new()),
    })
}

impl SimTopology {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn chain(&self) -> Option<&Chain> {
        self.chain.as_deref()
    }

    /// Full nodes serve from this chain.
    pub fn attach_chain(&mut self, chain: Arc<Chain>) {
        let mut index = HashMap::new();
        for b in chain.blocks() {
            for (i, t) in b.body.iter().enumerate() {
                index.insert(t.id(), (b.header.height, i));
            }
        }
        self.tx_index = Arc::new(index);
        self.chain = Some(chain);
    }

    /// Gives every dsn node a profile from `make`.
    pub fn provision_dsn<F>(&mut self, mut make: F) -> Result<(), SimError>
    where
        F: FnMut(usize) -> Result<Arc<DsnProfile>, SimError>,
    {
        for node in self.nodes.iter_mut().filter(|n| n.kind == NodeKind::Dsn) {
            node.dsn = Some(make(node.id)?);
        }
        Ok(())
    }

    /// Each coding node independently keeps a degree-`dist` subset of the
    /// segment, in the clear. Repeated calls add further segments.
    pub fn provision_coding<R: Rng + ?Sized>(&mut self, segment: &Segment, dist: &DegreeDistribution, rng: &mut R) {
        for node in self.nodes.iter_mut().filter(|n| n.kind == NodeKind::CodingDsn) {
            let picked = sample_storage_set(&segment.spec, dist, rng);
            node.stored_txs
                .get_or_insert_with(Vec::new)
                .extend(picked.into_iter().map(|p| segment.txs[p].clone()));
        }
    }

    pub fn set_byzantine(&mut self, ids: impl IntoIterator<Item = usize>) {
        for id in ids {
            if let Some(n) = self.nodes.get_mut(id) {
                n.byzantine = true;
            }
        }
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn first_alive(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.alive)
    }

    fn node(&self, id: usize) -> Result<&SimNode, SimError> {
        self.nodes.get(id).ok_or(SimError::NoSuchNode(id))
    }

    fn requester(&self, id: usize) -> Result<&SimNode, SimError> {
        let n = self.node(id)?;
        if n.alive {
            Ok(n)
        } else {
            Err(SimError::RequesterDead(id))
        }
    }
}

/// Kills exactly `round(fraction · n)` nodes chosen uniformly. The dead set
/// is a prefix of one random permutation, so for a fixed rng state a larger
/// fraction kills a superset.
pub fn inject_failures<R: Rng + ?Sized>(
    topology: &SimTopology,
    fraction: f64,
    rng: &mut R,
) -> Result<SimTopology, SimError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(SimError::BadTopology(format!("kill fraction {fraction} not in [0,1)")));
    }
    let mut out = topology.clone();
    let n = out.nodes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let dead = (fraction * n as f64).round() as usize;
    for &i in &order[..dead] {
        out.nodes[i].alive = false;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Request,
    Response,
    /// Reply saying the item is not held.
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MessageRecord {
    pub from: usize,
    pub to: usize,
    pub kind: MessageKind,
    pub bytes: usize,
}

/// Counters for one run. Every field only grows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimMetrics {
    pub messages: u64,
    /// Bytes carried by responses.
    pub bytes_sent: u64,
    pub request_bytes: u64,
    pub lookups_attempted: u64,
    pub lookups_succeeded: u64,
    pub segments_recovered: u64,
    pub segments_failed: u64,
    pub codewords_consumed: Vec<usize>,
    /// Payload bytes of codewords (excluding member ids and framing).
    pub coded_payload_bytes: u64,
    /// Responses rejected by a hash or Merkle check.
    pub fraud_detected: u64,
    pub degree0_skipped: u64,
    pub log: Vec<MessageRecord>,
}

impl SimMetrics {
    pub(crate) fn record(&mut self, from: usize, to: usize, kind: MessageKind, bytes: usize) {
        self.messages += 1;
        match kind {
            MessageKind::Request => self.request_bytes += bytes as u64,
            MessageKind::Response | MessageKind::Miss => self.bytes_sent += bytes as u64,
        }
        self.log.push(MessageRecord { from, to, kind, bytes });
    }

    /// Response bytes recomputed from the log.
    pub fn logged_response_bytes(&self) -> u64 {
        self.log
            .iter()
            .filter(|r| r.kind != MessageKind::Request)
            .map(|r| r.bytes as u64)
            .sum()
    }
}

pub(crate) fn flip_random_bit<R: Rng + ?Sized>(bytes: &mut [u8], rng: &mut R) {
    if bytes.is_empty() {
        return;
    }
    let bit = rng.random_range(0..bytes.len() * 8);
    bytes[bit / 8] ^= 1 << (bit % 8);
}
