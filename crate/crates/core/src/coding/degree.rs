use std::io::Write;

use rand::Rng;

use super::{CodingError, SegmentSpec};

/// Probability mass over degrees `1..=K`; `probs[γ − 1] = p(γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DegreeDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, CodingError> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(CodingError::BadParams("degree probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CodingError::BadParams(format!("degree probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { probs, cdf })
    }

    /// All mass on one degree.
    pub fn point(k: usize, degree: usize) -> Result<Self, CodingError> {
        if degree == 0 || degree > k {
            return Err(CodingError::BadParams(format!("degree {degree} outside 1..={k}")));
        }
        let mut probs = vec![0.0; k];
        probs[degree - 1] = 1.0;
        Self::new(probs)
    }

    /// Uniform degree with the given mean: a blend of uniform `1..=h` and
    /// `1..=h+1` where `h = floor(2·mean − 1)`.
    pub fn uniform_mean(k: usize, mean: f64) -> Result<Self, CodingError> {
        if !(mean >= 1.0 && mean <= (k as f64 + 1.0) / 2.0) {
            return Err(CodingError::BadParams(format!("mean {mean} outside [1, (k+1)/2] for k={k}")));
        }
        let h = (2.0 * mean - 1.0).floor() as usize;
        let w = (h + 2) as f64 - 2.0 * mean;
        let mut probs = vec![0.0; k];
        for p in probs.iter_mut().take(h) {
            *p += w / h as f64;
        }
        if w < 1.0 {
            for p in probs.iter_mut().take(h + 1) {
                *p += (1.0 - w) / (h + 1) as f64;
            }
        }
        Self::new(probs)
    }

    pub fn max_degree(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, degree: usize) -> f64 {
        degree
            .checked_sub(1)
            .and_then(|i| self.probs.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let i = self.cdf.partition_point(|&c| c <= r);
        // skip zero-mass degrees that share a cdf value with their predecessor
        i.min(self.probs.len() - 1) + 1
    }
}

/// `ceil(k · ln(k/ε))`: random placements needed to cover `k` bins with
/// probability at least `1 − ε`.
pub fn coupon_bound(k: usize, epsilon: f64) -> Result<u64, CodingError> {
    if k == 0 || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CodingError::BadParams(format!("k={k}, epsilon={epsilon}")));
    }
    let k = k as f64;
    Ok((k * (k / epsilon).ln()).ceil() as u64)
}

fn ideal_weights(k: usize) -> Vec<f64> {
    (1..=k)
        .map(|g| {
            if g == 1 {
                1.0 / k as f64
            } else {
                1.0 / (g as f64 * (g as f64 - 1.0))
            }
        })
        .collect()
}

/// `ρ(1) = 1/k`, `ρ(γ) = 1/(γ(γ−1))`.
pub fn ideal_soliton(k: usize) -> Result<DegreeDistribution, CodingError> {
    if k == 0 {
        return Err(CodingError::BadParams("k must be at least 1".into()));
    }
    DegreeDistribution::new(ideal_weights(k))
}

/// Robust soliton distribution with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSoliton {
    pub dist: DegreeDistribution,
    pub rho: Vec<f64>,
    pub tau: Vec<f64>,
    /// Expected ripple size `c·ln(K/ε)·√K`.
    pub s: f64,
    pub z: f64,
    /// Spike degree `round(K/S)`.
    pub pivot: usize,
}

/// `μ(γ) = (ρ(γ) + τ(γ)) / Z` with
/// `τ(γ) = S/(Kγ)` for `γ < pivot`, `τ(pivot) = (S/K)·ln(S/ε)`, zero beyond.
pub fn robust_soliton(spec: &SegmentSpec) -> Result<RobustSoliton, CodingError> {
    let k = spec.k;
    let kf = k as f64;
    let s = spec.c * (kf / spec.epsilon).ln() * kf.sqrt();
    let ratio = kf / s;
    if !(ratio >= 1.0) {
        return Err(CodingError::DegenerateSpike {
            ratio: format!("{ratio:.3}"),
        });
    }
    let pivot = (ratio.round() as usize).clamp(1, k);
    let rho = ideal_weights(k);
    let mut tau = vec![0.0; k];
    for g in 1..pivot {
        tau[g - 1] = s / (kf * g as f64);
    }
    tau[pivot - 1] = (s / kf * (s / spec.epsilon).ln()).max(0.0);
    let z: f64 = rho.iter().zip(&tau).map(|(r, t)| r + t).sum();
    let mu = rho.iter().zip(&tau).map(|(r, t)| (r + t) / z).collect();
    Ok(RobustSoliton {
        dist: DegreeDistribution::new(mu)?,
        rho,
        tau,
        s,
        z,
        pivot,
    })
}

/// `gamma,rho,tau,mu`.
pub fn write_distribution_csv<W: Write>(w: W, rs: &RobustSoliton) -> Result<(), CodingError> {
    let err = |e: csv::Error| CodingError::Wire(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["gamma", "rho", "tau", "mu"]).map_err(err)?;
    for g in 1..=rs.rho.len() {
        out.write_record([
            g.to_string(),
            format!("{:.12e}", rs.rho[g - 1]),
            format!("{:.12e}", rs.tau[g - 1]),
            format!("{:.12e}", rs.dist.prob(g)),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| CodingError::Wire(e.to_string()))
}
