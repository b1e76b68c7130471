//! Analytic model of output lifetimes and block entropy.
//!
//! The count of outputs spent `x` blocks after creation is modeled as
//! `N(x) = a1·e^(−b1·x) + a2·e^(−b2·x)`. From it:
//!
//! * `f(x) = N(x) / ∫N` is the duration density,
//! * `C(d) = ∫₀^(d−1) f` the probability an output of the block at depth `d`
//!   has already been spent, `U(d) = 1 − C(d)` its survival,
//! * `u(x)` the density of unspent outputs over the continuous depth
//!   coordinate, where the block at integer depth `k` covers `[k−1, k]`.
//!   It is `U` shifted by one block and normalized:
//!   `u(x) = U(x+1) / ∫₀^∞ U(s+1) ds = Σ (A_j/b_j)e^(−b_j x) / Σ A_j/b_j²`
//!   with `A_j = a_j / ∫N`,
//! * `H(d) = −u(d)·log₂ u(d)`.
//!
//! All integrals have exact antiderivatives; nothing here integrates numerically.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("negative depth {0}")]
    NegativeDepth(f64),
    #[error("invalid model parameters: {0}")]
    BadModel(String),
    #[error("reserved intervals overlap or are malformed near [{0}, {1}]")]
    OverlappingReservedSet(f64, f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("fit did not converge after {iterations} iterations (best r2 {r2:.4})")]
    FitDiverged {
        iterations: usize,
        best: DurationModel,
        r2: f64,
    },
    #[error("model file: {0}")]
    Parse(String),
}

/// Two-term exponential duration model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationModel {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl DurationModel {
    /// Fit reported for the Bitcoin UTXO set (April 2018).
    pub const BITCOIN: DurationModel = DurationModel {
        a1: 115000.0,
        b1: 2.005,
        a2: 38850.0,
        b2: 0.1302,
    };

    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self, EntropyError> {
        let m = Self { a1, b1, a2, b2 };
        m.validate()?;
        Ok(m)
    }

    pub fn single(a: f64, b: f64) -> Result<Self, EntropyError> {
        Self::new(a, b, 0.0, b)
    }

    pub fn validate(&self) -> Result<(), EntropyError> {
        let finite = [self.a1, self.b1, self.a2, self.b2].iter().all(|v| v.is_finite());
        if !finite || self.a1 < 0.0 || self.a2 < 0.0 || self.b1 <= 0.0 || self.b2 <= 0.0 {
            return Err(EntropyError::BadModel(format!("{self:?}")));
        }
        if self.a1 + self.a2 <= 0.0 {
            return Err(EntropyError::BadModel("all-zero amplitudes".into()));
        }
        Ok(())
    }

    pub fn n(&self, x: f64) -> f64 {
        self.a1 * (-self.b1 * x).exp() + self.a2 * (-self.b2 * x).exp()
    }

    /// `∫₀^∞ N`.
    pub fn mass(&self) -> f64 {
        self.a1 / self.b1 + self.a2 / self.b2
    }

    /// `∫_lo^hi N`: expected sample count in a duration range.
    pub fn count_between(&self, lo: f64, hi: f64) -> f64 {
        let seg = |a: f64, b: f64| a / b * ((-b * lo).exp() - (-b * hi).exp());
        seg(self.a1, self.b1) + seg(self.a2, self.b2)
    }

    /// Density coefficients `(A1, A2)` with `f(x) = A1 e^(−b1 x) + A2 e^(−b2 x)`.
    pub fn density_coefficients(&self) -> (f64, f64) {
        let m = self.mass();
        (self.a1 / m, self.a2 / m)
    }

    /// Coefficients of `u(x)` on the same exponents.
    pub fn utxo_coefficients(&self) -> (f64, f64) {
        let (c1, c2) = self.density_coefficients();
        let (s1, s2) = (c1 / self.b1, c2 / self.b2);
        let z = s1 / self.b1 + s2 / self.b2;
        (s1 / z, s2 / z)
    }

    /// Exact `∫_lo^hi u`, `hi` may be infinite.
    pub fn utxo_mass(&self, lo: f64, hi: f64) -> f64 {
        let (u1, u2) = self.utxo_coefficients();
        let seg = |c: f64, b: f64| {
            let tail = if hi.is_infinite() { 0.0 } else { (-b * hi).exp() };
            c / b * ((-b * lo).exp() - tail)
        };
        seg(u1, self.b1) + seg(u2, self.b2)
    }

    pub fn to_kv(&self, r2: Option<f64>) -> String {
        let mut s = format!(
            "a1={}\nb1={}\na2={}\nb2={}\n",
            self.a1, self.b1, self.a2, self.b2
        );
        if let Some(r2) = r2 {
            s.push_str(&format!("r2={r2}\n"));
        }
        s
    }
}

impl fmt::Display for DurationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}e^(-{}x) + {}e^(-{}x)",
            self.a1, self.b1, self.a2, self.b2
        )
    }
}

/// Parses the fitted-model file (`key=value` lines; `r2` optional and ignored).
impl FromStr for DurationModel {
    type Err = EntropyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut vals = [None; 4];
        for (ln, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| EntropyError::Parse(format!("line {}: expected key=value", ln + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| EntropyError::Parse(format!("line {}: bad number", ln + 1)))?;
            let slot = match k.trim() {
                "a1" => 0,
                "b1" => 1,
                "a2" => 2,
                "b2" => 3,
                "r2" => continue,
                other => {
                    return Err(EntropyError::Parse(format!("line {}: unknown key {other}", ln + 1)))
                }
            };
            vals[slot] = Some(v);
        }
        match vals {
            [Some(a1), Some(b1), Some(a2), Some(b2)] => DurationModel::new(a1, b1, a2, b2),
            _ => Err(EntropyError::Parse("missing one of a1, b1, a2, b2".into())),
        }
    }
}

/// Non-negative state duration in blocks.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DurationSample(f64);

impl DurationSample {
    pub fn new(x: f64) -> Result<Self, EntropyError> {
        if x >= 0.0 && x.is_finite() {
            Ok(Self(x))
        } else {
            Err(EntropyError::NegativeDuration(x))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_depth(d: f64) -> Result<(), EntropyError> {
    if d >= 0.0 {
        Ok(())
    } else {
        Err(EntropyError::NegativeDepth(d))
    }
}

pub fn density_f(model: &DurationModel, x: f64) -> Result<f64, EntropyError> {
    if !(x >= 0.0) {
        return Err(EntropyError::NegativeDuration(x));
    }
    Ok(model.n(x) / model.mass())
}

/// `C(d) = ∫₀^(d−1) f`, zero for `d ≤ 1`.
pub fn cumulative_c(model: &DurationModel, d: f64) -> Result<f64, EntropyError> {
    check_depth(d)?;
    let upper = (d - 1.0).max(0.0);
    let (c1, c2) = model.density_coefficients();
    Ok(c1 / model.b1 * (1.0 - (-model.b1 * upper).exp())
        + c2 / model.b2 * (1.0 - (-model.b2 * upper).exp()))
}

pub fn survival_u(model: &DurationModel, d: f64) -> Result<f64, EntropyError> {
    Ok(1.0 - cumulative_c(model, d)?)
}

pub fn utxo_density_u(model: &DurationModel, d: f64) -> Result<f64, EntropyError> {
    check_depth(d)?;
    let (u1, u2) = model.utxo_coefficients();
    Ok(u1 * (-model.b1 * d).exp() + u2 * (-model.b2 * d).exp())
}

/// `−p·log₂ p` with the `0·log 0 = 0` convention.
pub fn entropy_term(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

pub fn block_entropy_h(model: &DurationModel, d: f64) -> Result<f64, EntropyError> {
    Ok(entropy_term(utxo_density_u(model, d)?))
}

/// Closed-form broadcast accuracy for a union of disjoint depth intervals.
pub fn broadcast_accuracy_closed(
    model: &DurationModel,
    reserved: &[(f64, f64)],
) -> Result<f64, EntropyError> {
    let mut sorted = reserved.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prev_end = 0.0_f64;
    let mut total = 0.0;
    for (i, &(lo, hi)) in sorted.iter().enumerate() {
        if !(lo >= 0.0) || !(hi >= lo) || (i > 0 && lo < prev_end) {
            return Err(EntropyError::OverlappingReservedSet(lo, hi));
        }
        total += model.utxo_mass(lo, hi);
        prev_end = hi;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Depth intervals covered by a set of integer block depths (tip = 1),
/// with adjacent depths merged.
pub fn depth_intervals(depths: impl IntoIterator<Item = u64>) -> Vec<(f64, f64)> {
    let mut ds: Vec<u64> = depths.into_iter().filter(|&d| d >= 1).collect();
    ds.sort_unstable();
    ds.dedup();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for d in ds {
        let (lo, hi) = ((d - 1) as f64, d as f64);
        match out.last_mut() {
            Some(last) if last.1 == lo => last.1 = hi,
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Draws an integer depth in `[1, d_max]` with `P(k) ∝ ∫_(k−1)^k u`.
///
/// Inverse CDF by bisection over the closed-form cumulative.
pub fn sample_usage_depth<R: Rng + ?Sized>(model: &DurationModel, d_max: u64, rng: &mut R) -> u64 {
    let d_max = d_max.max(1);
    if d_max == 1 {
        return 1;
    }
    let total = model.utxo_mass(0.0, d_max as f64);
    let target = rng.random::<f64>() * total;
    // smallest k with ∫_0^k u >= target
    let (mut lo, mut hi) = (1u64, d_max);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if model.utxo_mass(0.0, mid as f64) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Fit outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub model: DurationModel,
    pub r2: f64,
    pub iterations: usize,
}

pub const MIN_FIT_SAMPLES: usize = 100;
const MAX_FIT_ITERATIONS: usize = 500;

/// Unit-width histogram `[i, i+1)` of the samples.
pub fn histogram(samples: &[DurationSample]) -> Vec<f64> {
    let max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let mut bins = vec![0.0; max.floor() as usize + 1];
    for s in samples {
        bins[s.0.floor() as usize] += 1.0;
    }
    bins
}

/// Expected count in bin `[i, i+1)` under `N`: `Σ a/b·(1−e^(−b))·e^(−b i)`.
fn bin_count(m: &[f64; 4], i: f64) -> f64 {
    let t = |a: f64, b: f64| a / b * (1.0 - (-b).exp()) * (-b * i).exp();
    t(m[0], m[1]) + t(m[2], m[3])
}

fn bin_gradient(m: &[f64; 4], i: f64) -> Vector4<f64> {
    let g = |a: f64, b: f64| {
        let e = (-b * i).exp();
        let w = 1.0 - (-b).exp();
        let da = w / b * e;
        // d/db [a/b (1-e^{-b}) e^{-bi}]
        let db = a * e * ((-b).exp() / b - w / (b * b) - w * i / b);
        (da, db)
    };
    let (a1, b1) = g(m[0], m[1]);
    let (a2, b2) = g(m[2], m[3]);
    Vector4::new(a1, b1, a2, b2)
}

fn sse(m: &[f64; 4], bins: &[f64]) -> f64 {
    bins.iter()
        .enumerate()
        .map(|(i, &y)| (y - bin_count(m, i as f64)).powi(2))
        .sum()
}

/// Coefficient of determination of `model` against histogram counts.
pub fn r_squared(model: &DurationModel, bins: &[f64]) -> f64 {
    let m = [model.a1, model.b1, model.a2, model.b2];
    let mean = bins.iter().sum::<f64>() / bins.len() as f64;
    let ss_tot: f64 = bins.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    (1.0 - sse(&m, bins) / ss_tot).max(0.0)
}

/// Starting point from log-linear regressions: the tail half of the
/// non-empty bins gives the slow term, head residuals give the fast term.
pub fn initial_guess(samples: &[DurationSample]) -> DurationModel {
    let bins = histogram(samples);
    let pts: Vec<(f64, f64)> = bins
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0)
        .map(|(i, &y)| (i as f64, y))
        .collect();
    let loglin = |pts: &[(f64, f64)]| -> Option<(f64, f64)> {
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1.ln()).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1.ln()).sum();
        let den = n * sxx - sx * sx;
        if den == 0.0 {
            return None;
        }
        let slope = (n * sxy - sx * sy) / den;
        let icpt = (sy - slope * sx) / n;
        Some((icpt.exp(), -slope))
    };
    let split = pts.len() / 2;
    let (amp2, b2) = loglin(&pts[split..])
        .filter(|&(_, b)| b > 0.0)
        .unwrap_or((pts.first().map_or(1.0, |p| p.1), 0.1));
    let head: Vec<(f64, f64)> = pts[..split]
        .iter()
        .map(|&(x, y)| (x, y - amp2 * (-b2 * x).exp()))
        .filter(|&(_, r)| r > 0.0)
        .collect();
    let (amp1, b1) = loglin(&head)
        .filter(|&(_, b)| b > b2)
        .unwrap_or((amp2 * 0.1, b2 * 10.0));
    // bin amplitudes → density amplitudes
    let to_a = |amp: f64, b: f64| amp * b / (1.0 - (-b).exp());
    DurationModel {
        a1: to_a(amp1, b1),
        b1,
        a2: to_a(amp2, b2),
        b2,
    }
}

/// Damped Gauss–Newton fit of the two-exponential to unit-bin counts.
///
/// Each bin is compared against the exact integral of `N` over the bin.
/// The better of `init` and [`initial_guess`] seeds the iteration. The
/// result is ordered so that `b1 ≥ b2`.
pub fn fit_duration_model(
    samples: &[DurationSample],
    init: &DurationModel,
) -> Result<FitReport, EntropyError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(EntropyError::TooFewSamples {
            need: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    let bins = histogram(samples);
    let seeds = [*init, initial_guess(samples)];
    let mut m = seeds
        .iter()
        .filter(|s| s.validate().is_ok())
        .map(|s| [s.a1, s.b1, s.a2, s.b2])
        .min_by(|a, b| sse(a, &bins).total_cmp(&sse(b, &bins)))
        .ok_or_else(|| EntropyError::BadModel("no valid starting point".into()))?;

    let mut cost = sse(&m, &bins);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_FIT_ITERATIONS {
        iterations = it + 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (i, &y) in bins.iter().enumerate() {
            let g = bin_gradient(&m, i as f64);
            let r = y - bin_count(&m, i as f64);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let cand = [
                (m[0] + step[0]).max(0.0),
                m[1] + step[1],
                (m[2] + step[2]).max(0.0),
                m[3] + step[3],
            ];
            if cand[1] <= 0.0 || cand[3] <= 0.0 || !cand.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let c = sse(&cand, &bins);
            if c <= cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                m = cand;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || converged {
            converged = true;
            break;
        }
    }

    let mut model = DurationModel {
        a1: m[0],
        b1: m[1],
        a2: m[2],
        b2: m[3],
    };
    if model.b1 < model.b2 {
        model = DurationModel {
            a1: model.a2,
            b1: model.b2,
            a2: model.a1,
            b2: model.b1,
        };
    }
    let r2 = r_squared(&model, &bins);
    if !converged || model.validate().is_err() {
        return Err(EntropyError::FitDiverged {
            iterations,
            best: model,
            r2,
        });
    }
    Ok(FitReport {
        model,
        r2,
        iterations,
    })
}

/// Draws a duration from `f` (continuous, exact inverse of each term).
pub fn sample_duration<R: Rng + ?Sized>(model: &DurationModel, rng: &mut R) -> f64 {
    let (c1, _) = model.density_coefficients();
    let w1 = c1 / model.b1;
    let b = if rng.random::<f64>() < w1 { model.b1 } else { model.b2 };
    -(1.0 - rng.random::<f64>()).ln() / b
}
