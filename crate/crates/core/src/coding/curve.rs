use super::{robust_soliton, sample_storage_set, CodingError, PeelingDecoder, Segment};
use crate::exec::{map_trials, trial_rng, Execution};

/// Outcome of repeated streaming decodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryCurve {
    /// Codewords consumed per trial; `None` if the cap was hit first.
    pub stopping: Vec<Option<usize>>,
    /// `(codewords received, transactions decoded)` after every codeword.
    pub trajectories: Vec<Vec<(usize, usize)>>,
    /// `(n, fraction of trials fully decoded after n codewords)` at each
    /// distinct stopping count.
    pub cdf: Vec<(usize, f64)>,
}

impl RecoveryCurve {
    pub fn median_stopping(&self) -> Option<f64> {
        let mut done: Vec<usize> = self.stopping.iter().flatten().copied().collect();
        if done.len() * 2 <= self.stopping.len() {
            return None;
        }
        // failures count as +infinity
        let n = self.stopping.len();
        done.sort_unstable();
        let at = |i: usize| done.get(i).map(|&v| v as f64).unwrap_or(f64::INFINITY);
        Some(if n % 2 == 1 {
            at(n / 2)
        } else {
            (at(n / 2 - 1) + at(n / 2)) / 2.0
        })
    }
}

/// Streams fresh robust-soliton codewords, one per independent node, into a
/// peeling decoder until it completes or `cap` codewords have arrived.
pub fn recovery_overhead_curve(
    segment: &Segment,
    trials: usize,
    seed: u64,
    cap: usize,
    exec: Execution,
) -> Result<RecoveryCurve, CodingError> {
    if trials == 0 {
        return Err(CodingError::BadParams("trials must be at least 1".into()));
    }
    let rs = robust_soliton(&segment.spec)?;
    let runs = map_trials(exec, trials, |t| {
        let mut rng = trial_rng(seed, t as u64);
        let mut dec = PeelingDecoder::new(&segment.spec);
        let mut traj = Vec::new();
        while !dec.is_complete() && dec.received() < cap {
            let positions = sample_storage_set(&segment.spec, &rs.dist, &mut rng);
            dec.push(&segment.codeword_for(&positions))?;
            traj.push((dec.received(), dec.decoded_count()));
        }
        let stop = dec.is_complete().then(|| dec.received());
        Ok((stop, traj))
    });
    let mut stopping = Vec::with_capacity(trials);
    let mut trajectories = Vec::with_capacity(trials);
    for r in runs {
        let (s, t) = r?;
        stopping.push(s);
        trajectories.push(t);
    }
    let mut done: Vec<usize> = stopping.iter().flatten().copied().collect();
    done.sort_unstable();
    let mut cdf: Vec<(usize, f64)> = Vec::new();
    for (i, &n) in done.iter().enumerate() {
        let frac = (i + 1) as f64 / trials as f64;
        match cdf.last_mut() {
            Some(last) if last.0 == n => last.1 = frac,
            _ => cdf.push((n, frac)),
        }
    }
    Ok(RecoveryCurve {
        stopping,
        trajectories,
        cdf,
    })
}
