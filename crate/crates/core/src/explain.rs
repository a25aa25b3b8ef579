//! Model-agnostic Kernel SHAP attribution and clean-vs-adversarial
//! attribution-stability metrics.
//!
//! The estimator samples feature coalitions, values each one as the mean
//! model output over the background set with masked features imputed from
//! background rows, and solves a Shapley-kernel weighted least squares with
//! the efficiency constraint eliminated analytically, so `base + sum(phi)`
//! always reproduces the instance prediction. Per-instance seeds keep
//! parallel batches identical to sequential runs.

use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::seed::{derive_stream, rng_from};

/// SHAP values for one instance in probability units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attribution {
    /// Per-column attribution.
    pub values: Vec<f64>,
    /// Mean model prediction over the background set.
    pub base_value: f64,
    /// Model prediction at the explained instance.
    pub prediction: f64,
}

impl Attribution {
    /// Efficiency residual: `base + sum(values) - prediction`; the solver
    /// keeps this at numerical zero.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>() - self.prediction
    }
}

/// Batch prediction function the explainer probes. Rows are model-space
/// feature vectors; the return must align with the input order.
pub trait PredictFn: Sync {
    fn predict(&self, xs: &[Vec<f64>]) -> Vec<f64>;
}

impl<F> PredictFn for F
where
    F: Fn(&[Vec<f64>]) -> Vec<f64> + Sync,
{
    fn predict(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        self(xs)
    }
}

/// Shapley kernel weight for a coalition of size `k` out of `d` features,
/// including the binomial mass of the size class.
fn kernel_weight(d: usize, k: usize) -> f64 {
    // (d - 1) / (C(d, k) * k * (d - k)); the endpoints are handled by the
    // efficiency constraint instead of this weight.
    let d_f = d as f64;
    let k_f = k as f64;
    let mut log_binom = 0.0;
    for i in 0..k {
        log_binom += ((d - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    ((d_f - 1.0).ln() - log_binom - (k_f * (d_f - k_f)).ln()).exp()
}

/// Kernel SHAP for one instance.
///
/// `n_coalitions` counts the sampled subsets plus the two fixed endpoint
/// coalitions (all-off and all-on) that anchor the base value and the
/// efficiency constraint. Sizes are sampled uniformly over 1..d and the
/// Shapley kernel enters as the regression weight. On a singular system the
/// solver errors; pass `ridge > 0` to [`kernel_shap_ridge`] as the documented
/// regularized fallback.
pub fn kernel_shap(
    model: &dyn PredictFn,
    x: &[f64],
    background: &[Vec<f64>],
    n_coalitions: usize,
    seed: u64,
) -> Result<Attribution> {
    kernel_shap_ridge(model, x, background, n_coalitions, seed, 0.0)
}

/// [`kernel_shap`] with a ridge term added to the normal equations; the
/// fallback for singular regression systems.
pub fn kernel_shap_ridge(
    model: &dyn PredictFn,
    x: &[f64],
    background: &[Vec<f64>],
    n_coalitions: usize,
    seed: u64,
    ridge: f64,
) -> Result<Attribution> {
    let d = x.len();
    if d < 2 {
        return Err(Error::Parameter(
            "kernel SHAP needs at least two features".into(),
        ));
    }
    if background.len() < 10 {
        return Err(Error::Parameter(format!(
            "background needs at least 10 rows, got {}",
            background.len()
        )));
    }
    if background.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("background width mismatch".into()));
    }
    if n_coalitions < 2 * d + 4 {
        return Err(Error::Parameter(format!(
            "n_coalitions = {n_coalitions} too small; need at least {}",
            2 * d + 4
        )));
    }

    // Endpoint coalitions: all-off gives the base value, all-on the
    // prediction itself.
    let prediction = model.predict(&[x.to_vec()])[0];
    let base_value =
        model.predict(background).iter().sum::<f64>() / background.len() as f64;

    let n_sampled = n_coalitions - 2;
    let mut rng = rng_from(seed);
    let mut coalitions: Vec<Vec<bool>> = Vec::with_capacity(n_sampled);
    let mut feature_order: Vec<usize> = (0..d).collect();
    for _ in 0..n_sampled {
        let k = 1 + rng.random_range(0..d - 1); // uniform size in 1..=d-1
        feature_order.shuffle(&mut rng);
        let mut z = vec![false; d];
        for &f in feature_order.iter().take(k) {
            z[f] = true;
        }
        coalitions.push(z);
    }

    // Value each coalition: mean prediction over background-imputed rows.
    let mut synth: Vec<Vec<f64>> = Vec::with_capacity(n_sampled * background.len());
    for z in &coalitions {
        for bg in background {
            let row: Vec<f64> = (0..d).map(|j| if z[j] { x[j] } else { bg[j] }).collect();
            synth.push(row);
        }
    }
    let preds = model.predict(&synth);
    let values: Vec<f64> = preds
        .chunks(background.len())
        .map(|chunk| chunk.iter().sum::<f64>() / chunk.len() as f64)
        .collect();

    // Weighted least squares with the efficiency constraint folded in:
    // phi_d = (prediction - base) - sum(phi_j, j < d). Regress
    // v(z) - base - z_d * (prediction - base) on a_j = z_j - z_d.
    let span = prediction - base_value;
    let m = d - 1;
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    for (z, &v) in coalitions.iter().zip(&values) {
        let k = z.iter().filter(|&&on| on).count();
        let w = kernel_weight(d, k);
        let zd = f64::from(z[d - 1] as u8);
        let target = v - base_value - zd * span;
        let a: Vec<f64> = (0..m).map(|j| f64::from(z[j] as u8) - zd).collect();
        for i in 0..m {
            if a[i] == 0.0 {
                continue;
            }
            atb[i] += w * a[i] * target;
            for j in 0..m {
                ata[i * m + j] += w * a[i] * a[j];
            }
        }
    }
    if ridge > 0.0 {
        for i in 0..m {
            ata[i * m + i] += ridge;
        }
    }
    let phi_head = solve_symmetric(&mut ata, &mut atb, m)?;
    let mut values_out = phi_head;
    let tail = span - values_out.iter().sum::<f64>();
    values_out.push(tail);

    Ok(Attribution {
        values: values_out,
        base_value,
        prediction,
    })
}

/// Gaussian elimination with partial pivoting on the (symmetric) normal
/// equations; small systems only.
fn solve_symmetric(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let cand = a[row * n + col].abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best < 1e-10 {
            return Err(Error::Solver(format!(
                "regression system singular at column {col}; retry with a ridge term"
            )));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in (col + 1)..n {
            acc -= a[col * n + j] * x[j];
        }
        x[col] = acc / a[col * n + col];
    }
    Ok(x)
}

/// Cosine similarity. Conventions for degenerate inputs: two zero vectors
/// compare as 1, one zero vector as 0.
pub fn cosine_sim(s: &[f64], t: &[f64]) -> f64 {
    let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ns == 0.0 && nt == 0.0 {
        return 1.0;
    }
    if ns == 0.0 || nt == 0.0 {
        return 0.0;
    }
    let dot: f64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
    dot / (ns * nt)
}

/// Average-rank assignment (1-based) with ties sharing their mean rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling: the classic
/// 1 - 6*sum(d^2)/(d(d^2-1)) formula when both vectors are tie-free, Pearson
/// on ranks otherwise (its tie-consistent generalization).
pub fn spearman(s: &[f64], t: &[f64]) -> Result<f64> {
    if s.len() != t.len() || s.len() < 2 {
        return Err(Error::Shape(
            "spearman needs two aligned vectors of length >= 2".into(),
        ));
    }
    let all_equal = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if all_equal(s) || all_equal(t) {
        return Err(Error::Metric(
            "spearman undefined for a constant vector".into(),
        ));
    }
    let rs = average_ranks(s);
    let rt = average_ranks(t);
    let has_ties = |r: &[f64]| {
        let mut sorted = r.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.windows(2).any(|w| w[0] == w[1])
    };
    let n = s.len() as f64;
    if !has_ties(&rs) && !has_ties(&rt) {
        let d2: f64 = rs.iter().zip(&rt).map(|(a, b)| (a - b).powi(2)).sum();
        return Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)));
    }
    // Pearson on ranks.
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, mt) = (mean(&rs), mean(&rt));
    let mut cov = 0.0;
    let mut vs = 0.0;
    let mut vt = 0.0;
    for (a, b) in rs.iter().zip(&rt) {
        cov += (a - ms) * (b - mt);
        vs += (a - ms).powi(2);
        vt += (b - mt).powi(2);
    }
    Ok(cov / (vs.sqrt() * vt.sqrt()))
}

/// Euclidean distance between attribution vectors.
pub fn l2_dist(s: &[f64], t: &[f64]) -> f64 {
    s.iter()
        .zip(t)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Per-instance similarity triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceStability {
    pub row: usize,
    pub cosine: f64,
    pub spearman: Option<f64>,
    pub l2: f64,
}

/// Aggregates of the per-instance stability metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityStats {
    pub per_instance: Vec<InstanceStability>,
    pub mean_cosine: f64,
    pub median_cosine: f64,
    pub p5_cosine: f64,
    pub mean_spearman: f64,
    pub median_spearman: f64,
    pub p5_spearman: f64,
    pub mean_l2: f64,
    pub median_l2: f64,
    pub p5_l2: f64,
    /// Instances skipped because attribution errored.
    pub skipped: usize,
}

fn aggregate(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let median = crate::dataio::percentile(&sorted, 0.5);
    let p5 = crate::dataio::percentile(&sorted, 0.05);
    (mean, median, p5)
}

/// Attribute the first `n_instances` aligned rows of the clean and adversarial
/// matrices with shared per-row seeds and background, then aggregate the
/// similarity metrics. Attribution failures are skipped and counted.
pub fn stability_report(
    model: &dyn PredictFn,
    x_clean: &[Vec<f64>],
    x_adv: &[Vec<f64>],
    background: &[Vec<f64>],
    n_instances: usize,
    n_coalitions: usize,
    seed: u64,
) -> Result<StabilityStats> {
    if x_clean.len() != x_adv.len() {
        return Err(Error::Shape(
            "clean and adversarial matrices must be row-aligned".into(),
        ));
    }
    let n = n_instances.min(x_clean.len());
    let pairs: Vec<(usize, Result<(Attribution, Attribution)>)> = map_indexed(n, |i| {
        let row_seed = derive_stream(seed, i as u64);
        let clean = kernel_shap(model, &x_clean[i], background, n_coalitions, row_seed);
        let adv = kernel_shap(model, &x_adv[i], background, n_coalitions, row_seed);
        (i, clean.and_then(|c| adv.map(|a| (c, a))))
    });

    let mut per_instance = Vec::with_capacity(n);
    let mut skipped = 0usize;
    for (row, pair) in pairs {
        match pair {
            Ok((c, a)) => {
                per_instance.push(InstanceStability {
                    row,
                    cosine: cosine_sim(&c.values, &a.values),
                    spearman: spearman(&c.values, &a.values).ok(),
                    l2: l2_dist(&c.values, &a.values),
                });
            }
            Err(_) => skipped += 1,
        }
    }
    if per_instance.is_empty() {
        return Err(Error::Solver(
            "every instance failed attribution; nothing to aggregate".into(),
        ));
    }
    let cos: Vec<f64> = per_instance.iter().map(|p| p.cosine).collect();
    let spr: Vec<f64> = per_instance.iter().filter_map(|p| p.spearman).collect();
    let l2s: Vec<f64> = per_instance.iter().map(|p| p.l2).collect();
    let (mean_cosine, median_cosine, p5_cosine) = aggregate(&cos);
    let (mean_spearman, median_spearman, p5_spearman) = aggregate(&spr);
    let (mean_l2, median_l2, p5_l2) = aggregate(&l2s);
    Ok(StabilityStats {
        per_instance,
        mean_cosine,
        median_cosine,
        p5_cosine,
        mean_spearman,
        median_spearman,
        p5_spearman,
        mean_l2,
        median_l2,
        p5_l2,
        skipped,
    })
}
