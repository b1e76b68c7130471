use std::fs;
use std::io::Write;

use super::{ExperimentConfig, ExperimentError, Outputs};
use crate::chain::Chain;
use crate::coding::{recovery_overhead_curve, robust_soliton, write_distribution_csv, Segment};
use crate::downsample::{
    build_dsn_entropy, build_dsn_latest, build_dsn_uniform, delta_from_factor, measure_accuracy,
    write_accuracy_csv, write_series_csv, AccuracyRow, Policy,
};
use crate::entropy::{broadcast_accuracy_closed, depth_intervals, fit_duration_model, histogram};
use crate::exec::{map_trials, trial_rng, Execution};
use crate::sim::{run_scenario, write_metrics_csv, ScenarioConfig};
use crate::synth::{generate_chain, generate_workload, state_durations};

// rng streams
const CHAIN_STREAM: u64 = 0;
const WORKLOAD_STREAM: u64 = 1;
const UNIFORM_STREAM: u64 = 2;

fn csv_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub(super) fn load_or_generate(cfg: &ExperimentConfig) -> Result<Chain, ExperimentError> {
    match &cfg.chain_file {
        Some(path) => {
            let bytes = fs::read(path).map_err(|source| ExperimentError::Io {
                path: path.clone(),
                source,
            })?;
            Chain::from_bytes(&bytes).map_err(ExperimentError::failed)
        }
        None => generate_chain(
            cfg.blocks,
            cfg.txs_per_block,
            &cfg.model,
            &mut trial_rng(cfg.seed, CHAIN_STREAM),
        )
        .map(|g| g.chain)
        .map_err(ExperimentError::failed),
    }
}

/// `chain.bin`, `chain.txt`.
pub(super) fn chain_gen(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, ExperimentError> {
    let chain = load_or_generate(cfg)?;
    out.write_with("chain.bin", |w| chain.write_to(w).map_err(csv_err))?;
    let dump = chain.text_dump();
    out.write_with("chain.txt", |w| w.write_all(dump.as_bytes()).map_err(csv_err))?;
    Ok(format!(
        "{} blocks, {} outputs, {} unspent",
        chain.len(),
        chain.total_outputs(),
        chain.state().utxos().len()
    ))
}

/// `model.txt`, `histogram.csv` (`x,count,fitted`).
pub(super) fn fit_duration(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String, ExperimentError> {
    let chain = load_or_generate(cfg)?;
    let samples = state_durations(&chain);
    let fit = fit_duration_model(&samples, &cfg.model).map_err(ExperimentError::failed)?;
    let bins = histogram(&samples);
    let model_text = fit.model.to_kv(Some(fit.r2));
    out.write_with("model.txt", |w| w.write_all(model_text.as_bytes()).map_err(csv_err))?;
    out.write_with("histogram.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["x", "count", "fitted"]).map_err(csv_err)?;
        for (x, n) in bins.iter().enumerate() {
            let fitted = fit.model.count_between(x as f64, x as f64 + 1.0);
            c.write_record([x.to_string(), format!("{n}"), format!("{fitted:.6}")])
                .map_err(csv_err)?;
        }
        c.flush().map_err(csv_err)
    })?;
    Ok(format!(
        "{} durations; fitted {} (R^2 = {:.4}, {} iterations)",
        samples.len(),
        fit.model,
        fit.r2,
        fit.iterations
    ))
}

/// `accuracy.csv` (`policy,M,delta,phi_avg`), `closed_form.csv`
/// (`M,delta,phi_closed`) and `realtime_M<M>.csv` (`height,phi_realtime`)
/// for the entropy policy.
pub(super) fn accuracy_sweep(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    exec: Execution,
) -> Result<String, ExperimentError> {
    let chain = load_or_generate(cfg)?;
    let workload = generate_workload(&chain, &cfg.model, cfg.workload, &mut trial_rng(cfg.seed, WORKLOAD_STREAM));
    let mut rows = Vec::new();
    let mut closed = Vec::new();
    let mut uniform_rng = trial_rng(cfg.seed, UNIFORM_STREAM);
    for &m in &cfg.factors {
        let delta = delta_from_factor(chain.len(), m);
        for &policy in &cfg.policies {
            let dsn = match policy {
                Policy::Entropy => build_dsn_entropy(&chain, &cfg.model, delta),
                Policy::Uniform => build_dsn_uniform(&chain, delta, &mut uniform_rng),
                Policy::LatestSuffix => build_dsn_latest(&chain, delta),
            }
            .map_err(ExperimentError::failed)?;
            let report = measure_accuracy(&chain, &dsn, &workload.txs, cfg.slices, exec);
            if policy == Policy::Entropy {
                let phi = broadcast_accuracy_closed(&cfg.model, &depth_intervals(dsn.reserved_depths()))
                    .map_err(ExperimentError::failed)?;
                closed.push((m, delta, phi));
                out.write_with(&format!("realtime_M{m}.csv"), |w| {
                    write_series_csv(w, &report.series).map_err(csv_err)
                })?;
            }
            rows.push(AccuracyRow {
                policy,
                factor: m,
                delta,
                phi_avg: report.phi,
            });
        }
    }
    out.write_with("accuracy.csv", |w| write_accuracy_csv(w, &rows).map_err(csv_err))?;
    out.write_with("closed_form.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["M", "delta", "phi_closed"]).map_err(csv_err)?;
        for (m, d, p) in &closed {
            c.write_record([m.to_string(), d.to_string(), format!("{p:.6}")]).map_err(csv_err)?;
        }
        c.flush().map_err(csv_err)
    })?;
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("{} M={} phi={:.4}", r.policy, r.factor, r.phi_avg))
        .collect();
    Ok(summary.join("; "))
}

/// `trajectory_<run>.csv` (`received,decoded`), `stopping.csv`
/// (`run,codewords,complete`) and `degree.csv` (`gamma,rho,tau,mu`).
pub(super) fn decode_run(cfg: &ExperimentConfig, out: &mut Outputs, exec: Execution) -> Result<String, ExperimentError> {
    let segment = Segment::synthetic(cfg.k, cfg.epsilon, cfg.c, cfg.seed).map_err(ExperimentError::failed)?;
    let rs = robust_soliton(&segment.spec).map_err(ExperimentError::failed)?;
    let curve = recovery_overhead_curve(&segment, cfg.runs, cfg.seed, cfg.cap, exec).map_err(ExperimentError::failed)?;
    for (i, traj) in curve.trajectories.iter().enumerate() {
        out.write_with(&format!("trajectory_{}.csv", i + 1), |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["received", "decoded"]).map_err(csv_err)?;
            for (r, d) in traj {
                c.write_record([r.to_string(), d.to_string()]).map_err(csv_err)?;
            }
            c.flush().map_err(csv_err)
        })?;
    }
    out.write_with("stopping.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["run", "codewords", "complete"]).map_err(csv_err)?;
        for (i, s) in curve.stopping.iter().enumerate() {
            let n = s.unwrap_or(curve.trajectories[i].len());
            c.write_record([(i + 1).to_string(), n.to_string(), s.is_some().to_string()])
                .map_err(csv_err)?;
        }
        c.flush().map_err(csv_err)
    })?;
    out.write_with("degree.csv", |w| write_distribution_csv(w, &rs).map_err(csv_err))?;
    let stops: Vec<String> = curve
        .stopping
        .iter()
        .map(|s| s.map_or("-".to_string(), |n| n.to_string()))
        .collect();
    Ok(format!(
        "K={} mean degree {:.3}; codewords to decode: {}",
        cfg.k,
        rs.dist.mean(),
        stops.join(", ")
    ))
}

/// `metrics.csv`, one row per run; run `i` uses seed `seed + i`.
pub(super) fn recovery_sim(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    exec: Execution,
) -> Result<String, ExperimentError> {
    let configs: Vec<ScenarioConfig> = (0..cfg.runs as u64)
        .map(|i| ScenarioConfig {
            seed: cfg.seed.wrapping_add(i),
            k: cfg.k,
            c: cfg.c,
            epsilon: cfg.epsilon,
            txs_per_block: cfg.txs_per_block,
            ..cfg.scenario.clone()
        })
        .collect();
    let rows = map_trials(exec, configs.len(), |i| run_scenario(&configs[i]))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(ExperimentError::failed)?;
    out.write_with("metrics.csv", |w| write_metrics_csv(w, &rows).map_err(csv_err))?;
    let done = rows.iter().filter(|r| r.segment_complete).count();
    Ok(format!("{} runs, {} segments recovered", rows.len(), done))
}
