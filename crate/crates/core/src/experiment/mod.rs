//! Experiment front-end shared by the binary and the tests.
//!
//! A run is described by a `key = value` config. Values are resolved with
//! the precedence config file > command-line flag > environment > default,
//! and the resolved config is written back as `manifest.txt` in the same
//! format, so `--config <out>/manifest.txt` repeats the run exactly.

mod runs;

use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::downsample::Policy;
use crate::entropy::DurationModel;
use crate::exec::Execution;
use crate::kv;
use crate::sim::ScenarioConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CHAINSAMPLE_OUT";
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config is empty")]
    EmptyConfig,
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("experiment failed: {0}")]
    Failed(String),
}

impl ExperimentError {
    /// Whether the fault lies in the configuration rather than the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::EmptyConfig | ExperimentError::Config { .. } | ExperimentError::Invalid(_)
        )
    }

    pub(crate) fn failed(e: impl fmt::Display) -> Self {
        ExperimentError::Failed(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    FitDuration,
    AccuracySweep,
    DecodeRun,
    RecoverySim,
    ChainGen,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::FitDuration,
        ExperimentKind::AccuracySweep,
        ExperimentKind::DecodeRun,
        ExperimentKind::RecoverySim,
        ExperimentKind::ChainGen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FitDuration => "fit-duration",
            ExperimentKind::AccuracySweep => "accuracy-sweep",
            ExperimentKind::DecodeRun => "decode-run",
            ExperimentKind::RecoverySim => "recovery-sim",
            ExperimentKind::ChainGen => "chain-gen",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown experiment {s:?} (one of {})", names.join(", "))
            })
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Fully resolved parameters of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    pub model: DurationModel,
    pub blocks: u64,
    pub txs_per_block: usize,
    /// Read the chain from this file instead of generating one.
    pub chain_file: Option<PathBuf>,
    pub factors: Vec<usize>,
    pub policies: Vec<Policy>,
    pub workload: usize,
    pub slices: usize,
    pub k: usize,
    pub c: f64,
    pub epsilon: f64,
    pub runs: usize,
    /// Codewords after which a decode run gives up.
    pub cap: usize,
    pub scenario: ScenarioConfig,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            seed: 1,
            out: PathBuf::from(DEFAULT_OUT),
            model: DurationModel::BITCOIN,
            blocks: 2000,
            txs_per_block: 8,
            chain_file: None,
            factors: vec![10, 100, 1000],
            policies: vec![Policy::Entropy, Policy::Uniform, Policy::LatestSuffix],
            workload: 5000,
            slices: 20,
            k: 1000,
            c: 0.05,
            epsilon: 0.05,
            runs: 3,
            cap: 20_000,
            scenario: ScenarioConfig::default(),
        };
        cfg.scenario.seed = cfg.seed;
        cfg.scenario.k = cfg.k;
        cfg.scenario.c = cfg.c;
        cfg.scenario.epsilon = cfg.epsilon;
        cfg.scenario.txs_per_block = cfg.txs_per_block;
        cfg
    }

    fn set(&mut self, key: &str, v: &str) -> Result<bool, String> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            kv::value(0, key, v).map_err(|(_, m)| m)
        }
        let m = &mut self.model;
        match key {
            "experiment" => {
                let named: ExperimentKind = v.parse()?;
                if named != self.experiment {
                    return Err(format!("config is for {named}, not {}", self.experiment));
                }
            }
            "seed" => {
                self.seed = p(key, v)?;
                self.scenario.seed = self.seed;
            }
            "out" => self.out = PathBuf::from(v),
            "a1" => m.a1 = p(key, v)?,
            "b1" => m.b1 = p(key, v)?,
            "a2" => m.a2 = p(key, v)?,
            "b2" => m.b2 = p(key, v)?,
            "blocks" => self.blocks = p(key, v)?,
            "txs_per_block" => {
                self.txs_per_block = p(key, v)?;
                self.scenario.txs_per_block = self.txs_per_block;
            }
            "chain_file" => self.chain_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "factors" => self.factors = parse_list(v)?,
            "policies" => self.policies = parse_list(v)?,
            "workload" => self.workload = p(key, v)?,
            "slices" => self.slices = p(key, v)?,
            "K" | "k" => {
                self.k = p(key, v)?;
                self.scenario.k = self.k;
            }
            "c" => {
                self.c = p(key, v)?;
                self.scenario.c = self.c;
            }
            "epsilon" => {
                self.epsilon = p(key, v)?;
                self.scenario.epsilon = self.epsilon;
            }
            "runs" => self.runs = p(key, v)?,
            "cap" => self.cap = p(key, v)?,
            other => return self.scenario.set(other, v),
        }
        Ok(true)
    }

    /// Resolves a config file against flags and the environment.
    ///
    /// Precedence: config file > flag > environment > default.
    pub fn resolve(
        experiment: ExperimentKind,
        config_text: &str,
        flag_seed: Option<u64>,
        flag_out: Option<PathBuf>,
        env_out: Option<PathBuf>,
    ) -> Result<Self, ExperimentError> {
        let pairs = kv::parse(config_text).map_err(|(line, msg)| ExperimentError::Config { line, msg })?;
        if pairs.is_empty() {
            return Err(ExperimentError::EmptyConfig);
        }
        let mut cfg = Self::defaults(experiment);
        if let Some(out) = flag_out.or(env_out) {
            cfg.out = out;
        }
        if let Some(seed) = flag_seed {
            cfg.seed = seed;
            cfg.scenario.seed = seed;
        }
        for (line, k, v) in pairs {
            match cfg.set(&k, &v) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(ExperimentError::Config {
                        line,
                        msg: format!("unknown key {k:?}"),
                    })
                }
                Err(msg) => return Err(ExperimentError::Config { line, msg }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        self.model.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        if self.blocks == 0 {
            return bad("blocks must be at least 1".into());
        }
        if self.factors.is_empty() || self.factors.contains(&0) {
            return bad("factors must be positive".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {} not in (0,1)", self.epsilon));
        }
        if !(self.c > 0.0) {
            return bad(format!("c {} must be positive", self.c));
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "a1 = {}\nb1 = {}\na2 = {}\nb2 = {}", m.a1, m.b1, m.a2, m.b2);
        let _ = writeln!(s, "blocks = {}", self.blocks);
        let _ = writeln!(s, "txs_per_block = {}", self.txs_per_block);
        if let Some(f) = &self.chain_file {
            let _ = writeln!(s, "chain_file = {}", f.display());
        }
        let _ = writeln!(s, "factors = {}", join(&self.factors));
        let _ = writeln!(s, "policies = {}", join(&self.policies));
        let _ = writeln!(s, "workload = {}", self.workload);
        let _ = writeln!(s, "slices = {}", self.slices);
        let _ = writeln!(s, "K = {}", self.k);
        let _ = writeln!(s, "c = {}", self.c);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "runs = {}", self.runs);
        let _ = writeln!(s, "cap = {}", self.cap);
        for line in self.scenario.to_kv().lines() {
            let key = line.split('=').next().unwrap_or("").trim();
            if !matches!(key, "K" | "c" | "epsilon" | "seed" | "txs_per_block") {
                let _ = writeln!(s, "{line}");
            }
        }
        s
    }
}

/// Files written so far; removed again if the run fails.
pub(crate) struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self, ExperimentError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    pub(crate) fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), ExperimentError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), String>,
    {
        let path = self.dir.join(name);
        let io = |source| ExperimentError::Io {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(io)?;
        self.files.push(path.clone());
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(ExperimentError::Failed)?;
        w.flush().map_err(io)
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Paths written by a successful run, manifest last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RunReport, ExperimentError> {
    cfg.validate()?;
    let mut out = Outputs::open(&cfg.out)?;
    let result = match cfg.experiment {
        ExperimentKind::ChainGen => runs::chain_gen(cfg, &mut out),
        ExperimentKind::FitDuration => runs::fit_duration(cfg, &mut out),
        ExperimentKind::AccuracySweep => runs::accuracy_sweep(cfg, &mut out, exec),
        ExperimentKind::DecodeRun => runs::decode_run(cfg, &mut out, exec),
        ExperimentKind::RecoverySim => runs::recovery_sim(cfg, &mut out, exec),
    }
    .and_then(|summary| {
        let manifest = cfg.to_kv();
        out.write_with("manifest.txt", |w| w.write_all(manifest.as_bytes()).map_err(|e| e.to_string()))?;
        Ok(summary)
    });
    match result {
        Ok(summary) => Ok(RunReport {
            files: out.files.clone(),
            summary,
        }),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        ExperimentConfig::resolve(ExperimentKind::DecodeRun, text, None, None, None)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("nope".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn empty_and_unknown() {
        assert!(matches!(resolve("# only a comment\n"), Err(ExperimentError::EmptyConfig)));
        assert!(matches!(
            resolve("K = 10\n\nfoo = 3\n"),
            Err(ExperimentError::Config { line: 3, .. })
        ));
        assert!(matches!(
            resolve("experiment = chain-gen\n"),
            Err(ExperimentError::Config { line: 1, .. })
        ));
        assert!(matches!(resolve("epsilon = 2\n"), Err(ExperimentError::Invalid(_))));
    }

    #[test]
    fn precedence() {
        let k = ExperimentKind::ChainGen;
        let env = Some(PathBuf::from("from-env"));
        let flag = Some(PathBuf::from("from-flag"));
        let c = ExperimentConfig::resolve(k, "blocks = 3\n", None, None, env.clone()).unwrap();
        assert_eq!(c.out, PathBuf::from("from-env"));
        let c = ExperimentConfig::resolve(k, "blocks = 3\n", Some(9), flag.clone(), env.clone()).unwrap();
        assert_eq!((c.out.clone(), c.seed), (PathBuf::from("from-flag"), 9));
        let c = ExperimentConfig::resolve(k, "blocks = 3\nout = from-file\nseed = 4\n", Some(9), flag, env).unwrap();
        assert_eq!((c.out, c.seed), (PathBuf::from("from-file"), 4));
    }

    #[test]
    fn manifest_round_trip() {
        let c = resolve("K = 50\nfactors = 10,20\nmix = full:0.5,dsn:0,coding:0.5\nstorage = point:3\n").unwrap();
        let again = resolve(&c.to_kv()).unwrap();
        assert_eq!(again, c);
    }
}
