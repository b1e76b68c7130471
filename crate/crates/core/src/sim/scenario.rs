use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use super::{
    build_topology, inject_failures, recover_block, recover_segment_coded, recover_segment_uncoded,
    recover_transaction, NodeMix, ProbeMode, SimError, SimMetrics,
};
use crate::coding::{robust_soliton, DegreeDistribution, Segment};
use crate::downsample::{build_dsn_entropy, delta_from_factor};
use crate::entropy::DurationModel;
use crate::exec::trial_rng;
use crate::kv;
use crate::synth::generate_chain;

/// How coding nodes pick their storage degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoragePolicy {
    RobustSoliton,
    /// Uniform degree with this mean.
    UniformMean(f64),
    /// Every node stores exactly this many.
    Point(usize),
}

impl FromStr for StoragePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "soliton" {
            return Ok(StoragePolicy::RobustSoliton);
        }
        let bad = || format!("expected soliton | uniform:<mean> | point:<degree>, got {s:?}");
        match s.split_once(':') {
            Some(("uniform", m)) => m.parse().map(StoragePolicy::UniformMean).map_err(|_| bad()),
            Some(("point", d)) => d.parse().map(StoragePolicy::Point).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for StoragePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoragePolicy::RobustSoliton => f.write_str("soliton"),
            StoragePolicy::UniformMean(m) => write!(f, "uniform:{m}"),
            StoragePolicy::Point(d) => write!(f, "point:{d}"),
        }
    }
}

fn parse_mix(s: &str) -> Result<NodeMix, String> {
    let mut mix = NodeMix {
        full: 0.0,
        dsn: 0.0,
        coding: 0.0,
    };
    for part in s.split(',') {
        let (k, v) = part
            .split_once(':')
            .ok_or_else(|| format!("mix entry {part:?} is not kind:fraction"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("bad fraction in {part:?}"))?;
        match k.trim() {
            "full" => mix.full = v,
            "dsn" => mix.dsn = v,
            "coding" => mix.coding = v,
            other => return Err(format!("unknown node kind {other:?}")),
        }
    }
    Ok(mix)
}

/// One simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub m_neighbors: usize,
    pub mix: NodeMix,
    pub k: usize,
    pub epsilon: f64,
    pub c: f64,
    pub kill_fraction: f64,
    pub byzantine_fraction: f64,
    pub seed: u64,
    pub mode: ProbeMode,
    pub storage: StoragePolicy,
    pub chain_blocks: u64,
    pub txs_per_block: usize,
    /// Downsampling factor of the dsn nodes.
    pub dsn_factor: usize,
    /// Block and transaction lookups issued (each).
    pub lookups: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            m_neighbors: 8,
            mix: NodeMix {
                full: 0.1,
                dsn: 0.3,
                coding: 0.6,
            },
            k: 100,
            epsilon: 0.05,
            c: 0.05,
            kill_fraction: 0.0,
            byzantine_fraction: 0.0,
            seed: 1,
            mode: ProbeMode::Sequential,
            storage: StoragePolicy::RobustSoliton,
            chain_blocks: 100,
            txs_per_block: 4,
            dsn_factor: 10,
            lookups: 20,
        }
    }
}

impl ScenarioConfig {
    pub const KEYS: [&'static str; 15] = [
        "n_nodes",
        "m_neighbors",
        "mix",
        "K",
        "epsilon",
        "c",
        "kill_fraction",
        "byzantine_fraction",
        "seed",
        "mode",
        "storage",
        "chain_blocks",
        "txs_per_block",
        "dsn_factor",
        "lookups",
    ];

    /// Applies one `key = value` pair. Returns `Ok(false)` for keys it does
    /// not know.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            kv::value(0, key, v).map_err(|(_, m)| m)
        }
        match key {
            "n_nodes" => self.n_nodes = p(key, v)?,
            "m_neighbors" => self.m_neighbors = p(key, v)?,
            "mix" => self.mix = parse_mix(v)?,
            "K" | "k" => self.k = p(key, v)?,
            "epsilon" => self.epsilon = p(key, v)?,
            "c" => self.c = p(key, v)?,
            "kill_fraction" => self.kill_fraction = p(key, v)?,
            "byzantine_fraction" => self.byzantine_fraction = p(key, v)?,
            "seed" => self.seed = p(key, v)?,
            "mode" => self.mode = v.parse()?,
            "storage" => self.storage = v.parse()?,
            "chain_blocks" => self.chain_blocks = p(key, v)?,
            "txs_per_block" => self.txs_per_block = p(key, v)?,
            "dsn_factor" => self.dsn_factor = p(key, v)?,
            "lookups" => self.lookups = p(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        let pairs = kv::parse(text).map_err(|(line, msg)| SimError::Config { line, msg })?;
        for (line, k, v) in pairs {
            match cfg.set(&k, &v) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(SimError::Config {
                        line,
                        msg: format!("unknown key {k:?}"),
                    })
                }
                Err(msg) => return Err(SimError::Config { line, msg }),
            }
        }
        Ok(cfg)
    }

    /// Every key, one per line, in a form [`ScenarioConfig::parse`] accepts.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            ProbeMode::Sequential => "sequential",
            ProbeMode::Parallel => "parallel",
        };
        let m = &self.mix;
        let _ = writeln!(s, "n_nodes = {}", self.n_nodes);
        let _ = writeln!(s, "m_neighbors = {}", self.m_neighbors);
        let _ = writeln!(s, "mix = full:{},dsn:{},coding:{}", m.full, m.dsn, m.coding);
        let _ = writeln!(s, "K = {}", self.k);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "c = {}", self.c);
        let _ = writeln!(s, "kill_fraction = {}", self.kill_fraction);
        let _ = writeln!(s, "byzantine_fraction = {}", self.byzantine_fraction);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "storage = {}", self.storage);
        let _ = writeln!(s, "chain_blocks = {}", self.chain_blocks);
        let _ = writeln!(s, "txs_per_block = {}", self.txs_per_block);
        let _ = writeln!(s, "dsn_factor = {}", self.dsn_factor);
        let _ = writeln!(s, "lookups = {}", self.lookups);
        s
    }
}

/// One CSV row per run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub seed: u64,
    pub n_nodes: usize,
    pub m_neighbors: usize,
    pub k: usize,
    pub kill_fraction: f64,
    pub mode: ProbeMode,
    pub metrics: SimMetrics,
    pub segment_complete: bool,
    pub decoded_fraction: f64,
    pub payload_len: usize,
    pub uncoded_txs: usize,
    pub uncoded_tx_bytes: u64,
}

impl ScenarioRow {
    pub const HEADER: [&'static str; 20] = [
        "seed",
        "n_nodes",
        "m_neighbors",
        "K",
        "kill_fraction",
        "mode",
        "messages",
        "bytes_sent",
        "lookups_attempted",
        "lookups_succeeded",
        "segments_recovered",
        "codewords_consumed",
        "decoded_fraction",
        "payload_len",
        "coded_payload_bytes",
        "uncoded_txs",
        "uncoded_tx_bytes",
        "uncoded_padded_bytes",
        "fraud_detected",
        "degree0_skipped",
    ];

    fn record(&self) -> Vec<String> {
        let m = &self.metrics;
        vec![
            self.seed.to_string(),
            self.n_nodes.to_string(),
            self.m_neighbors.to_string(),
            self.k.to_string(),
            self.kill_fraction.to_string(),
            match self.mode {
                ProbeMode::Sequential => "sequential".into(),
                ProbeMode::Parallel => "parallel".into(),
            },
            m.messages.to_string(),
            m.bytes_sent.to_string(),
            m.lookups_attempted.to_string(),
            m.lookups_succeeded.to_string(),
            m.segments_recovered.to_string(),
            m.codewords_consumed.iter().sum::<usize>().to_string(),
            format!("{:.6}", self.decoded_fraction),
            self.payload_len.to_string(),
            m.coded_payload_bytes.to_string(),
            self.uncoded_txs.to_string(),
            self.uncoded_tx_bytes.to_string(),
            (self.uncoded_txs * self.payload_len).to_string(),
            m.fraud_detected.to_string(),
            m.degree0_skipped.to_string(),
        ]
    }
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[ScenarioRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ScenarioRow::HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

/// Builds a chain, a population and a segment from `cfg`, then issues block
/// and transaction lookups and one coded segment recovery (plus the uncoded
/// baseline, whose traffic is kept out of `metrics`).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRow, SimError> {
    let setup = |e: &dyn std::fmt::Display| SimError::Setup(e.to_string());
    let model = DurationModel::BITCOIN;
    let chain = generate_chain(cfg.chain_blocks.max(1), cfg.txs_per_block, &model, &mut trial_rng(cfg.seed, 0))
        .map_err(|e| setup(&e))?
        .chain;
    let txs: Vec<_> = chain.blocks().iter().flat_map(|b| b.body.iter().cloned()).take(cfg.k).collect();
    if txs.len() < cfg.k {
        return Err(SimError::Setup(format!(
            "chain holds {} transactions, segment needs {}",
            txs.len(),
            cfg.k
        )));
    }
    let segment = Segment::new(txs, cfg.epsilon, cfg.c)?;
    let dist = match cfg.storage {
        StoragePolicy::RobustSoliton => robust_soliton(&segment.spec)?.dist,
        StoragePolicy::UniformMean(m) => DegreeDistribution::uniform_mean(cfg.k, m)?,
        StoragePolicy::Point(d) => DegreeDistribution::point(cfg.k, d)?,
    };

    let mut topo_rng = trial_rng(cfg.seed, 1);
    let mut topo = build_topology(cfg.n_nodes, cfg.m_neighbors, cfg.mix, &mut topo_rng)?;
    let chain = Arc::new(chain);
    topo.attach_chain(chain.clone());
    let delta = delta_from_factor(chain.len(), cfg.dsn_factor);
    let profile = Arc::new(build_dsn_entropy(&chain, &model, delta).map_err(|e| setup(&e))?);
    topo.provision_dsn(|_| Ok(profile.clone()))?;
    topo.provision_coding(&segment, &dist, &mut trial_rng(cfg.seed, 2));
    if !(0.0..=1.0).contains(&cfg.byzantine_fraction) {
        return Err(SimError::Setup("byzantine_fraction must lie in [0,1]".into()));
    }
    let n_byz = (cfg.byzantine_fraction * cfg.n_nodes as f64).round() as usize;
    topo.set_byzantine(rand::seq::index::sample(&mut topo_rng, cfg.n_nodes, n_byz));
    let topo = inject_failures(&topo, cfg.kill_fraction, &mut trial_rng(cfg.seed, 3))?;

    let requester = topo
        .first_alive()
        .ok_or_else(|| SimError::Setup("every node is dead".into()))?;
    let mut rng = trial_rng(cfg.seed, 4);
    let mut metrics = SimMetrics::default();
    for _ in 0..cfg.lookups {
        let h = rng.random_range(0..chain.len() as u64);
        let block = chain.block(h).expect("height in range");
        recover_block(&topo, requester, &block.header.hash(), cfg.mode, &mut metrics, &mut rng)?;
        let tx = &block.body[rng.random_range(0..block.body.len())];
        recover_transaction(&topo, requester, &tx.id(), cfg.mode, &mut metrics, &mut rng)?;
    }
    let coded = recover_segment_coded(&topo, requester, &segment, &mut metrics, &mut rng)?;
    let mut baseline_metrics = SimMetrics::default();
    let uncoded = recover_segment_uncoded(&topo, requester, &segment, &mut baseline_metrics, &mut rng)?;
    Ok(ScenarioRow {
        seed: cfg.seed,
        n_nodes: cfg.n_nodes,
        m_neighbors: cfg.m_neighbors,
        k: cfg.k,
        kill_fraction: cfg.kill_fraction,
        mode: cfg.mode,
        metrics,
        segment_complete: coded.complete,
        decoded_fraction: coded.decoded_fraction(),
        payload_len: segment.spec.payload_len,
        uncoded_txs: uncoded.txs_received,
        uncoded_tx_bytes: uncoded.tx_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = ScenarioConfig::parse("n_nodes = 50\nmix = full:0.2,dsn:0.3,coding:0.5\nmode = parallel\nstorage = uniform:3.5\n").unwrap();
        assert_eq!(cfg.n_nodes, 50);
        assert_eq!(cfg.mode, ProbeMode::Parallel);
        assert_eq!(cfg.storage, StoragePolicy::UniformMean(3.5));
        assert_eq!(ScenarioConfig::parse(&cfg.to_kv()).unwrap(), cfg);
        assert!(matches!(
            ScenarioConfig::parse("n_nodes = 5\nbogus = 1\n"),
            Err(SimError::Config { line: 2, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("\nmix = full:x\n"),
            Err(SimError::Config { line: 2, .. })
        ));
    }

    #[test]
    fn scenario_is_reproducible() {
        let cfg = ScenarioConfig {
            n_nodes: 120,
            k: 40,
            chain_blocks: 30,
            ..ScenarioConfig::default()
        };
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metrics.bytes_sent, a.metrics.logged_response_bytes());
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[a]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 20);
    }
}
