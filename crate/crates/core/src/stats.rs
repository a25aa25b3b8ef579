//! Percentile bootstrap confidence intervals and interval-separation tests.
//!
//! Replicates resample rows with replacement under per-replicate derived
//! seeds, so the replicate set is identical however the loop is sharded.
//! Replicate values are sorted before the quantiles, which keeps aggregation
//! order-independent.

use serde::{Deserialize, Serialize};

use crate::dataio::percentile;
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::seed::{derive_stream, rng_from};
use rand::RngExt;

/// Percentile bootstrap interval. The percentile method does not guarantee
/// `lower <= point <= upper` in pathological cases; only `lower <= upper`
/// holds by construction, and the point estimate is reported separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    /// Replicates where the metric was undefined (for example a single-class
    /// AUROC resample); discarded and counted.
    pub discarded: usize,
    pub seed: u64,
}

/// Scalar metric over a (scores, labels) sample.
pub trait MetricFn: Sync {
    fn eval(&self, scores: &[f64], labels: &[u8]) -> Result<f64>;
}

impl<F> MetricFn for F
where
    F: Fn(&[f64], &[u8]) -> Result<f64> + Sync,
{
    fn eval(&self, scores: &[f64], labels: &[u8]) -> Result<f64> {
        self(scores, labels)
    }
}

fn check_args(n: usize, b: usize, level: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Stats("bootstrap needs nonempty data".into()));
    }
    if b < 100 {
        return Err(Error::Stats(format!(
            "bootstrap needs at least 100 replicates, got {b}"
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Parameter(format!("level = {level} outside (0, 1)")));
    }
    Ok(())
}

fn resample_eval(
    metric: &dyn MetricFn,
    scores: &[f64],
    labels: &[u8],
    rep_seed: u64,
) -> Result<f64> {
    let n = scores.len();
    let mut rng = rng_from(rep_seed);
    let mut rs = Vec::with_capacity(n);
    let mut rl = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..n);
        rs.push(scores[k]);
        rl.push(labels[k]);
    }
    metric.eval(&rs, &rl)
}

fn interval(point: f64, mut vals: Vec<f64>, b: usize, level: f64, seed: u64) -> Result<BootstrapCI> {
    let discarded = b - vals.len();
    if discarded * 10 > b {
        return Err(Error::Stats(format!(
            "metric undefined on {discarded} of {b} replicates (over 10%)"
        )));
    }
    vals.sort_by(|a, c| a.partial_cmp(c).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCI {
        point,
        lower: percentile(&vals, alpha),
        upper: percentile(&vals, 1.0 - alpha),
        level,
        replicates: vals.len(),
        discarded,
        seed,
    })
}

/// Percentile bootstrap CI for `metric` over the sample.
pub fn bootstrap_ci(
    metric: &dyn MetricFn,
    scores: &[f64],
    labels: &[u8],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCI> {
    check_args(scores.len(), b, level)?;
    let point = metric.eval(scores, labels)?;
    let vals: Vec<f64> = map_indexed(b, |r| {
        resample_eval(metric, scores, labels, derive_stream(seed, r as u64)).ok()
    })
    .into_iter()
    .flatten()
    .collect();
    interval(point, vals, b, level, seed)
}

/// Sequential twin of [`bootstrap_ci`] for equivalence tests and benches.
pub fn bootstrap_ci_seq(
    metric: &dyn MetricFn,
    scores: &[f64],
    labels: &[u8],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCI> {
    check_args(scores.len(), b, level)?;
    let point = metric.eval(scores, labels)?;
    let vals: Vec<f64> = map_indexed_seq(b, |r| {
        resample_eval(metric, scores, labels, derive_stream(seed, r as u64)).ok()
    })
    .into_iter()
    .flatten()
    .collect();
    interval(point, vals, b, level, seed)
}

/// Paired bootstrap for comparing two scenarios over the same rows: each
/// replicate draws one index set and evaluates both score vectors on it, so
/// the comparison is paired. Labels are shared.
pub fn bootstrap_ci_paired(
    metric: &dyn MetricFn,
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[u8],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<(BootstrapCI, BootstrapCI)> {
    if scores_a.len() != scores_b.len() || scores_a.len() != labels.len() {
        return Err(Error::Shape("paired bootstrap inputs must align".into()));
    }
    check_args(labels.len(), b, level)?;
    let point_a = metric.eval(scores_a, labels)?;
    let point_b = metric.eval(scores_b, labels)?;
    let n = labels.len();
    let pairs: Vec<(Option<f64>, Option<f64>)> = map_indexed(b, |r| {
        let mut rng = rng_from(derive_stream(seed, r as u64));
        let mut ra = Vec::with_capacity(n);
        let mut rb = Vec::with_capacity(n);
        let mut rl = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.random_range(0..n);
            ra.push(scores_a[k]);
            rb.push(scores_b[k]);
            rl.push(labels[k]);
        }
        (metric.eval(&ra, &rl).ok(), metric.eval(&rb, &rl).ok())
    });
    // A replicate counts only if both sides are defined, keeping the pairing.
    let mut vals_a = Vec::with_capacity(b);
    let mut vals_b = Vec::with_capacity(b);
    for (a, bv) in pairs {
        if let (Some(a), Some(bv)) = (a, bv) {
            vals_a.push(a);
            vals_b.push(bv);
        }
    }
    Ok((
        interval(point_a, vals_a, b, level, seed)?,
        interval(point_b, vals_b, b, level, seed)?,
    ))
}

/// Strict interval separation: true iff the intervals do not touch.
pub fn ci_separated(a: &BootstrapCI, b: &BootstrapCI) -> Result<bool> {
    if a.level != b.level {
        return Err(Error::Parameter(format!(
            "interval levels differ: {} vs {}",
            a.level, b.level
        )));
    }
    Ok(a.upper < b.lower || b.upper < a.lower)
}
