//! Seeded synthetic credit dataset with a logistic ground truth.
//!
//! Labels are drawn from a logistic model over a random linear combination of
//! the features plus noise, so a linear oracle exists for attribution checks.
//! The intercept is placed between order statistics of the sampling
//! thresholds, which pins the realized positive count to `round(rate * n)`
//! exactly.

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::dataio::schema::{DatasetSchema, FeatureSpec};
use crate::dataio::table::{Cell, RawTable};
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Spread of the standardized latent score; keeps the Bayes-optimal AUROC in
/// a mid range so attacks have headroom to do visible damage.
const LATENT_STD: f64 = 1.4;
/// Scale of per-category latent effects.
const CATEGORY_EFFECT_STD: f64 = 0.45;
/// Scale of the additive label noise.
const LABEL_NOISE_STD: f64 = 0.35;

/// Generate an `n`-row table with `d_numeric` numeric and `d_categorical`
/// categorical features plus `id` and `default` columns, and the matching
/// schema. One categorical is marked immutable and one sensitive.
pub fn generate_synthetic_credit(
    n: usize,
    d_numeric: usize,
    d_categorical: usize,
    default_rate: f64,
    seed: u64,
) -> Result<(RawTable, DatasetSchema)> {
    if n < 100 {
        return Err(Error::Parameter(format!("n = {n} must be at least 100")));
    }
    if !(0.0 < default_rate && default_rate < 0.5) {
        return Err(Error::Parameter(format!(
            "default_rate = {default_rate} must lie in (0, 0.5)"
        )));
    }
    if d_numeric == 0 {
        return Err(Error::Parameter("need at least one numeric feature".into()));
    }

    let mut rng = rng_from(seed);

    // Ground-truth weights for numerics, then per-category effects, in a
    // fixed draw order so same seed means byte-identical output.
    let weights: Vec<f64> = (0..d_numeric)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let cat_specs: Vec<Vec<&'static str>> = (0..d_categorical)
        .map(|j| {
            if j == 1 || (j == 0 && d_categorical == 1) {
                vec!["a", "b"] // sensitive feature: exactly two groups
            } else {
                vec!["g0", "g1", "g2"]
            }
        })
        .collect();
    let cat_effects: Vec<Vec<f64>> = cat_specs
        .iter()
        .map(|cats| {
            cats.iter()
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * CATEGORY_EFFECT_STD
                })
                .collect()
        })
        .collect();

    let mut numeric_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut cat_rows: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut latent: Vec<f64> = Vec::with_capacity(n);
    let mut uniforms: Vec<f64> = Vec::with_capacity(n);

    for _ in 0..n {
        let mut nums = Vec::with_capacity(d_numeric);
        for j in 0..d_numeric {
            let v = match j {
                0 => rng.random::<f64>(),                          // utilization-like, [0,1)
                1 => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z.abs() // non-negative exposure-like
                }
                _ => StandardNormal.sample(&mut rng),
            };
            nums.push(v);
        }
        let mut cats = Vec::with_capacity(d_categorical);
        for spec in &cat_specs {
            cats.push(rng.random_range(0..spec.len()));
        }
        let mut z: f64 = nums.iter().zip(&weights).map(|(x, w)| x * w).sum();
        for (j, &c) in cats.iter().enumerate() {
            z += cat_effects[j][c];
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        z += noise * LABEL_NOISE_STD;
        latent.push(z);
        uniforms.push(rng.random::<f64>());
        numeric_rows.push(nums);
        cat_rows.push(cats);
    }

    // Standardize the latent, then choose the intercept between order
    // statistics of t_i = logit(u_i) - z_i so exactly k rows go positive.
    let mean = latent.iter().sum::<f64>() / n as f64;
    let var = latent.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-12);
    for z in &mut latent {
        *z = (*z - mean) / std * LATENT_STD;
    }
    let mut thresholds: Vec<f64> = latent
        .iter()
        .zip(&uniforms)
        .map(|(&z, &u)| (u / (1.0 - u)).ln() - z)
        .collect();
    let k = (default_rate * n as f64).round() as usize;
    let mut sorted = thresholds.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let intercept = if k == 0 {
        sorted[0] - 1.0
    } else if k >= n {
        sorted[n - 1] + 1.0
    } else {
        0.5 * (sorted[k - 1] + sorted[k])
    };
    let labels: Vec<u8> = thresholds
        .iter_mut()
        .map(|t| u8::from(*t < intercept))
        .collect();

    let mut columns = vec!["id".to_string()];
    columns.extend((0..d_numeric).map(|j| format!("num_{j}")));
    columns.extend((0..d_categorical).map(|j| format!("cat_{j}")));
    columns.push("default".to_string());

    let rows: Vec<Vec<Cell>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(columns.len());
            row.push(Cell::Num(i as f64));
            for &v in &numeric_rows[i] {
                row.push(Cell::Num(v));
            }
            for (j, &c) in cat_rows[i].iter().enumerate() {
                row.push(Cell::Str(cat_specs[j][c].to_string()));
            }
            row.push(Cell::Str(if labels[i] == 1 { "1" } else { "0" }.to_string()));
            row
        })
        .collect();

    let mut features = Vec::new();
    for j in 0..d_numeric {
        let mut f = FeatureSpec::numeric(&format!("num_{j}"));
        match j {
            0 => {
                f.lower = Some(0.0);
                f.upper = Some(1.0);
            }
            1 => f.lower = Some(0.0),
            _ => {}
        }
        features.push(f);
    }
    for (j, _) in cat_specs.iter().enumerate() {
        let mut f = FeatureSpec::categorical(&format!("cat_{j}"));
        if j == 0 {
            f.immutable = true;
        }
        if j == 1 || (j == 0 && d_categorical == 1) {
            f.sensitive = true;
        }
        features.push(f);
    }
    let schema = DatasetSchema {
        features,
        target: "default".into(),
        positive_label: "1".into(),
        ids: vec!["id".into()],
        clip_quantiles: (0.01, 0.99),
    };
    schema.validate()?;

    Ok((
        RawTable {
            columns,
            rows,
            target_normalized: false,
        },
        schema,
    ))
}
