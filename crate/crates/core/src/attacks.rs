//! l-infinity bounded white-box attacks: FGSM and PGD with ball projection
//! and a domain-plausibility projector.
//!
//! Gradients are taken per row, so batch composition can never change an
//! attack's output, and rows shard freely across threads: random starts draw
//! from per-row seeds derived from the attack seed.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::dataio::{ColumnRole, DatasetSchema, Preprocessor};
use crate::error::{Error, Result};
use crate::nn::{input_gradient_row, MlpParams};
use crate::parallel::{map_indexed, map_indexed_seq};
use crate::seed::{derive_stream, rng_from};

fn default_epsilon() -> f64 {
    0.05
}
fn default_alpha() -> f64 {
    0.01
}
fn default_steps() -> usize {
    10
}
fn default_true() -> bool {
    true
}

/// Threat-model contract: budget, step size, iterations, initialization and
/// projector toggles. All magnitudes are in normalized feature units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_true")]
    pub random_start: bool,
    /// Apply the domain projector after the attack.
    #[serde(rename = "domain_projector", default = "default_true")]
    pub apply_domain_projector: bool,
    /// Re-project onto the domain after every PGD step instead of only after
    /// the last; kept off by default, exposed for sensitivity analysis.
    #[serde(default)]
    pub domain_every_step: bool,
    /// Absent means: derive from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            steps: default_steps(),
            random_start: true,
            apply_domain_projector: true,
            domain_every_step: false,
            seed: None,
        }
    }
}

impl AttackConfig {
    /// Effective seed: the explicit one, or 0.
    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Parameter(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Parameter(format!(
                "alpha = {} must be positive",
                self.alpha
            )));
        }
        if self.steps == 0 {
            return Err(Error::Parameter("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Feature-wise plausibility constraints in normalized space: bound clamps
/// for declared ranges, restore-exactly masks for immutable columns (numeric
/// or whole one-hot blocks).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainProjector {
    /// Per-column normalized [lower, upper]; either side may be absent.
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
    /// Columns restored bit-exactly to the original row.
    pub immutable: Vec<bool>,
}

impl DomainProjector {
    /// Build from the fitted preprocessor: original-unit bounds translate
    /// through the per-feature standardization; immutability propagates to
    /// every column of a one-hot block.
    pub fn from_preprocessor(pre: &Preprocessor, _schema: &DatasetSchema) -> Self {
        let mut bounds = Vec::with_capacity(pre.columns.len());
        let mut immutable = Vec::with_capacity(pre.columns.len());
        for col in &pre.columns {
            match col {
                ColumnRole::Numeric {
                    mean,
                    std,
                    lower,
                    upper,
                    ..
                } => {
                    bounds.push((
                        lower.map(|lo| (lo - mean) / std),
                        upper.map(|hi| (hi - mean) / std),
                    ));
                }
                ColumnRole::OneHot { .. } => bounds.push((None, None)),
            }
            immutable.push(col.is_immutable());
        }
        DomainProjector { bounds, immutable }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }
}

/// Clip `x_adv` back onto the l-infinity ball of radius `epsilon` around `x`.
pub fn project_ball(x_adv: &mut [f64], x: &[f64], epsilon: f64) {
    debug_assert_eq!(x_adv.len(), x.len());
    for (a, &o) in x_adv.iter_mut().zip(x) {
        *a = a.clamp(o - epsilon, o + epsilon);
    }
}

/// Restore immutable columns to the original row exactly and clamp bounded
/// columns into their normalized ranges. Idempotent.
pub fn project_domain(x_adv: &mut [f64], x_orig: &[f64], projector: &DomainProjector) {
    debug_assert_eq!(x_adv.len(), projector.dim());
    for (i, a) in x_adv.iter_mut().enumerate() {
        if projector.immutable[i] {
            *a = x_orig[i];
            continue;
        }
        let (lo, hi) = projector.bounds[i];
        if let Some(lo) = lo {
            if *a < lo {
                *a = lo;
            }
        }
        if let Some(hi) = hi {
            if *a > hi {
                *a = hi;
            }
        }
    }
}

/// Sign with sign(0) = 0: exactly-zero gradients leave a coordinate alone.
fn sign0(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_inputs(
    model: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
) -> Result<()> {
    cfg.validate()?;
    model.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if cfg.apply_domain_projector {
        match projector {
            None => {
                return Err(Error::Parameter(
                    "domain projector enabled but none supplied".into(),
                ))
            }
            Some(p) if !xs.is_empty() && p.dim() != xs[0].len() => {
                return Err(Error::Shape(format!(
                    "projector covers {} columns, rows have {}",
                    p.dim(),
                    xs[0].len()
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

fn fgsm_row(
    model: &MlpParams,
    x: &[f64],
    y: u8,
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
) -> Vec<f64> {
    let g = input_gradient_row(model, x, y);
    let mut adv: Vec<f64> = x
        .iter()
        .zip(&g)
        .map(|(&xv, &gv)| xv + cfg.epsilon * sign0(gv))
        .collect();
    project_ball(&mut adv, x, cfg.epsilon);
    if cfg.apply_domain_projector {
        project_domain(&mut adv, x, projector.expect("checked"));
    }
    adv
}

fn pgd_row(
    model: &MlpParams,
    x: &[f64],
    y: u8,
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
    row_seed: u64,
) -> Vec<f64> {
    let mut cur: Vec<f64> = if cfg.random_start {
        let mut rng = rng_from(row_seed);
        x.iter()
            .map(|&xv| xv + (rng.random::<f64>() * 2.0 - 1.0) * cfg.epsilon)
            .collect()
    } else {
        x.to_vec()
    };
    for _ in 0..cfg.steps {
        let g = input_gradient_row(model, &cur, y);
        for (c, &gv) in cur.iter_mut().zip(&g) {
            *c += cfg.alpha * sign0(gv);
        }
        project_ball(&mut cur, x, cfg.epsilon);
        if cfg.domain_every_step && cfg.apply_domain_projector {
            project_domain(&mut cur, x, projector.expect("checked"));
        }
    }
    if cfg.apply_domain_projector {
        project_domain(&mut cur, x, projector.expect("checked"));
    }
    cur
}

/// One-step fast gradient sign attack over a batch of rows.
pub fn fgsm(
    model: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(model, xs, ys, cfg, projector)?;
    Ok(map_indexed(xs.len(), |i| {
        fgsm_row(model, &xs[i], ys[i], cfg, projector)
    }))
}

/// Sequential twin of [`fgsm`] for equivalence tests and benches.
pub fn fgsm_seq(
    model: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(model, xs, ys, cfg, projector)?;
    Ok(map_indexed_seq(xs.len(), |i| {
        fgsm_row(model, &xs[i], ys[i], cfg, projector)
    }))
}

/// Iterated projected gradient descent attack. Random starts (when enabled)
/// draw uniformly inside the ball from per-row seeds; the ball projection
/// runs every step and the domain projection after the final iterate.
pub fn pgd(
    model: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(model, xs, ys, cfg, projector)?;
    Ok(map_indexed(xs.len(), |i| {
        pgd_row(
            model,
            &xs[i],
            ys[i],
            cfg,
            projector,
            derive_stream(cfg.seed_or_default(), i as u64),
        )
    }))
}

/// Sequential twin of [`pgd`] for equivalence tests and benches.
pub fn pgd_seq(
    model: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    cfg: &AttackConfig,
    projector: Option<&DomainProjector>,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(model, xs, ys, cfg, projector)?;
    Ok(map_indexed_seq(xs.len(), |i| {
        pgd_row(
            model,
            &xs[i],
            ys[i],
            cfg,
            projector,
            derive_stream(cfg.seed_or_default(), i as u64),
        )
    }))
}

/// Largest per-coordinate deviation between two row sets; audit helper for
/// the l-infinity contract.
pub fn max_linf_deviation(xs: &[Vec<f64>], advs: &[Vec<f64>]) -> f64 {
    xs.iter()
        .zip(advs)
        .flat_map(|(x, a)| x.iter().zip(a).map(|(&xv, &av)| (av - xv).abs()))
        .fold(0.0, f64::max)
}
