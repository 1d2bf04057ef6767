use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalLenError, LengthPair, LengthUnit};
use crate::par;

/// Every estimate of one fish together with its ground-truth length.
#[derive(Debug, Clone, PartialEq)]
pub struct FishSamples {
    pub truth: f64,
    pub estimates: Vec<f64>,
}

/// Groups pairs by fish id, keeping input order within each fish.
pub fn group_by_fish(pairs: &[LengthPair]) -> BTreeMap<u64, FishSamples> {
    let mut out: BTreeMap<u64, FishSamples> = BTreeMap::new();
    for p in pairs {
        out.entry(p.fish_id)
            .or_insert_with(|| FishSamples {
                truth: p.truth,
                estimates: Vec::new(),
            })
            .estimates
            .push(p.estimate);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationCurve {
    pub n_values: Vec<usize>,
    pub mae_cm: Vec<f64>,
    /// Standard deviation of the MAE over trials.
    pub std_cm: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub fish_used: usize,
    pub fish_excluded: usize,
}

impl AggregationCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mae_cm,std_cm\n");
        for i in 0..self.n_values.len() {
            let _ = writeln!(s, "{},{:.6},{:.6}", self.n_values[i], self.mae_cm[i], self.std_cm[i]);
        }
        s
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean and sample standard deviation, shifted by the first value so that
/// identical inputs give a standard deviation of exactly zero.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let x0 = v[0];
    let n = v.len() as f64;
    let d: Vec<f64> = v.iter().map(|x| x - x0).collect();
    let md = d.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (x0 + md, var.sqrt())
}

/// MAE of per-fish medians over random subsets of `n` estimates per fish.
///
/// Each `(n, trial)` draws from its own ChaCha stream of `seed`, so results are
/// reproducible and independent of thread count. Fish with fewer estimates than
/// the largest `n` are left out of every point of the curve.
pub fn aggregation_curve(
    fish: &BTreeMap<u64, FishSamples>,
    unit: LengthUnit,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<AggregationCurve, EvalLenError> {
    if n_values.is_empty() {
        return Err(EvalLenError::EmptySampleCounts);
    }
    if trials == 0 || n_values.contains(&0) {
        return Err(EvalLenError::ZeroSamples);
    }
    let n_max = *n_values.iter().max().expect("nonempty");
    let pool: Vec<(&u64, &FishSamples)> =
        fish.iter().filter(|(_, s)| s.estimates.len() >= n_max).collect();
    let excluded = fish.len() - pool.len();
    if excluded > 0 {
        log::warn!("{excluded} fish have fewer than {n_max} estimates and are excluded");
    }
    if pool.is_empty() {
        return Err(EvalLenError::NoFishWithSamples(n_max));
    }
    for (_, s) in &pool {
        if !(s.truth > 0.0) {
            return Err(EvalLenError::NonPositiveTruth(s.truth));
        }
    }

    let mut mae_cm = Vec::with_capacity(n_values.len());
    let mut std_cm = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let per_trial = par::map_range(0..trials, |trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((n as u64) << 32) | trial as u64);
            let mut total = 0.0;
            let mut buf = Vec::with_capacity(n);
            for (_, s) in &pool {
                buf.clear();
                for i in rand::seq::index::sample(&mut rng, s.estimates.len(), n) {
                    buf.push(s.estimates[i]);
                }
                let m = median(&mut buf);
                total += (unit.to_cm(m) - unit.to_cm(s.truth)).abs();
            }
            total / pool.len() as f64
        });
        let (m, sd) = mean_std(&per_trial);
        mae_cm.push(m);
        std_cm.push(sd);
    }
    Ok(AggregationCurve {
        n_values: n_values.to_vec(),
        mae_cm,
        std_cm,
        trials,
        seed,
        fish_used: pool.len(),
        fish_excluded: excluded,
    })
}
