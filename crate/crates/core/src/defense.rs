//! Model hardening: on-the-fly PGD adversarial training and Gaussian-noise
//! regularized training.
//!
//! Both defenses reuse the plain training loop through its batch rewrite
//! hook, so optimizer state and best-epoch checkpointing behave identically;
//! a defense with zero budget (mix ratio 0, epsilon 0, sigma 0) reproduces
//! plain training bit for bit because the hook never draws randomness.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd, AttackConfig, DomainProjector};
use crate::error::{Error, Result};
use crate::nn::{train_with_augment, TrainConfig, TrainOutcome};
use crate::seed::{derive_seed, derive_stream, rng_from};

fn default_sigma() -> f64 {
    0.05
}
fn default_mix() -> f64 {
    0.5
}

/// Hardening strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseMode {
    PgdAdvTraining,
    NoiseRegularized,
}

/// Defense hyperparameters; `attack` configures the training-time PGD and
/// `noise_sigma` the regularizer, in normalized units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub mode: DefenseMode,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Fraction of each batch replaced by adversarial rows.
    #[serde(default = "default_mix")]
    pub adv_mix_ratio: f64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            mode: DefenseMode::PgdAdvTraining,
            attack: AttackConfig::default(),
            noise_sigma: default_sigma(),
            adv_mix_ratio: default_mix(),
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(Error::Parameter("noise_sigma must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.adv_mix_ratio) {
            return Err(Error::Parameter("adv_mix_ratio must lie in [0, 1]".into()));
        }
        // epsilon == 0 is allowed here: a zero-budget training attack
        // degenerates to plain training rather than erroring.
        if self.attack.epsilon > 0.0 {
            self.attack.validate()?;
        }
        Ok(())
    }
}

/// Gaussian perturbation of every column of every row; deliberately ignores
/// immutability: this is a training-time regularizer, not an attack.
pub(crate) fn add_gaussian_noise(
    rows: &mut [Vec<f64>],
    sigma: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) {
    for row in rows {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
}

/// Train with a fraction of every batch replaced by PGD examples generated
/// against the current parameters.
pub fn adversarial_train(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    train_cfg: &TrainConfig,
    defense_cfg: &DefenseConfig,
    projector: Option<&DomainProjector>,
) -> Result<TrainOutcome> {
    defense_cfg.validate()?;
    if defense_cfg.mode != DefenseMode::PgdAdvTraining {
        return Err(Error::Parameter(
            "adversarial_train requires mode = pgd_adv_training".into(),
        ));
    }
    let mix = defense_cfg.adv_mix_ratio;
    if mix == 0.0 || defense_cfg.attack.epsilon == 0.0 {
        // Zero-budget defense: no adversarial rows, no extra randomness.
        return train_with_augment(train_x, train_y, val_x, val_y, train_cfg, None);
    }

    let attack_base = derive_seed(defense_cfg.attack.seed_or_default(), "defense-pgd");
    let template = defense_cfg.attack.clone();
    let mut hook = |params: &crate::nn::MlpParams,
                    epoch: usize,
                    batch: usize,
                    bx: &mut Vec<Vec<f64>>,
                    by: &[u8]|
     -> Result<()> {
        let k = (((bx.len() as f64) * mix).round() as usize).min(bx.len());
        if k == 0 {
            return Ok(());
        }
        let mut cfg = template.clone();
        cfg.seed = Some(derive_stream(attack_base, ((epoch as u64) << 32) | batch as u64));
        let adv = pgd(params, &bx[..k], &by[..k], &cfg, projector)?;
        for (slot, row) in bx[..k].iter_mut().zip(adv) {
            *slot = row;
        }
        Ok(())
    };
    train_with_augment(train_x, train_y, val_x, val_y, train_cfg, Some(&mut hook))
}

/// Train with i.i.d. Gaussian noise of standard deviation `noise_sigma`
/// added to each batch's inputs; labels unchanged, fresh draws every epoch.
pub fn noise_regularized_train(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    train_cfg: &TrainConfig,
    defense_cfg: &DefenseConfig,
) -> Result<TrainOutcome> {
    defense_cfg.validate()?;
    if defense_cfg.mode != DefenseMode::NoiseRegularized {
        return Err(Error::Parameter(
            "noise_regularized_train requires mode = noise_regularized".into(),
        ));
    }
    let sigma = defense_cfg.noise_sigma;
    if sigma == 0.0 {
        return train_with_augment(train_x, train_y, val_x, val_y, train_cfg, None);
    }

    // Dedicated stream, consumed in (epoch, batch, row) order.
    let mut noise_rng = rng_from(derive_seed(train_cfg.seed.unwrap_or(0), "noise-aug"));
    let mut hook = |_: &crate::nn::MlpParams,
                    _epoch: usize,
                    _batch: usize,
                    bx: &mut Vec<Vec<f64>>,
                    _by: &[u8]|
     -> Result<()> {
        add_gaussian_noise(bx, sigma, &mut noise_rng);
        Ok(())
    };
    train_with_augment(train_x, train_y, val_x, val_y, train_cfg, Some(&mut hook))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::train;
    use crate::seed::rng_from;
    use rand::RngExt;

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = rng_from(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = u8::from(i % 2 == 0);
            let shift = if y == 1 { 1.0 } else { -1.0 };
            xs.push(vec![
                shift + rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ]);
            ys.push(y);
        }
        (xs, ys)
    }

    fn cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            seed: Some(seed),
            hidden1: 8,
            hidden2: 4,
            batch_size: 32,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_mix_ratio_is_plain_training() {
        let (xs, ys) = toy(100, 1);
        let (vx, vy) = toy(40, 2);
        let tc = cfg(5);
        let plain = train(&xs, &ys, &vx, &vy, &tc).unwrap();
        let dc = DefenseConfig {
            adv_mix_ratio: 0.0,
            attack: AttackConfig {
                apply_domain_projector: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let defended = adversarial_train(&xs, &ys, &vx, &vy, &tc, &dc, None).unwrap();
        assert_eq!(plain.params, defended.params);
    }

    #[test]
    fn zero_epsilon_is_plain_training() {
        let (xs, ys) = toy(100, 3);
        let (vx, vy) = toy(40, 4);
        let tc = cfg(6);
        let plain = train(&xs, &ys, &vx, &vy, &tc).unwrap();
        let dc = DefenseConfig {
            attack: AttackConfig {
                epsilon: 0.0,
                apply_domain_projector: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let defended = adversarial_train(&xs, &ys, &vx, &vy, &tc, &dc, None).unwrap();
        assert_eq!(plain.params, defended.params);
    }

    #[test]
    fn zero_sigma_is_plain_training() {
        let (xs, ys) = toy(100, 7);
        let (vx, vy) = toy(40, 8);
        let tc = cfg(9);
        let plain = train(&xs, &ys, &vx, &vy, &tc).unwrap();
        let dc = DefenseConfig {
            mode: DefenseMode::NoiseRegularized,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let defended = noise_regularized_train(&xs, &ys, &vx, &vy, &tc, &dc).unwrap();
        assert_eq!(plain.params, defended.params);
    }

    #[test]
    fn adversarial_training_changes_parameters() {
        let (xs, ys) = toy(100, 11);
        let (vx, vy) = toy(40, 12);
        let tc = cfg(13);
        let plain = train(&xs, &ys, &vx, &vy, &tc).unwrap();
        let dc = DefenseConfig {
            attack: AttackConfig {
                apply_domain_projector: false,
                random_start: false,
                steps: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let defended = adversarial_train(&xs, &ys, &vx, &vy, &tc, &dc, None).unwrap();
        assert_ne!(plain.params, defended.params);
    }

    #[test]
    fn defense_runs_are_deterministic() {
        let (xs, ys) = toy(100, 21);
        let (vx, vy) = toy(40, 22);
        let tc = cfg(23);
        let dc = DefenseConfig {
            attack: AttackConfig {
                apply_domain_projector: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = adversarial_train(&xs, &ys, &vx, &vy, &tc, &dc, None).unwrap();
        let b = adversarial_train(&xs, &ys, &vx, &vy, &tc, &dc, None).unwrap();
        assert_eq!(a.params, b.params);

        let nc = DefenseConfig {
            mode: DefenseMode::NoiseRegularized,
            ..Default::default()
        };
        let c = noise_regularized_train(&xs, &ys, &vx, &vy, &tc, &nc).unwrap();
        let d = noise_regularized_train(&xs, &ys, &vx, &vy, &tc, &nc).unwrap();
        assert_eq!(c.params, d.params);
    }

    #[test]
    fn noise_ignores_immutability() {
        // The noise helper takes no mask at all: every column moves.
        let mut rows = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0]];
        let before = rows.clone();
        let mut rng = rng_from(31);
        add_gaussian_noise(&mut rows, 0.5, &mut rng);
        for (r_after, r_before) in rows.iter().zip(&before) {
            for (a, b) in r_after.iter().zip(r_before) {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn wrong_mode_rejected() {
        let (xs, ys) = toy(100, 41);
        let tc = cfg(42);
        let dc = DefenseConfig {
            mode: DefenseMode::NoiseRegularized,
            ..Default::default()
        };
        assert!(matches!(
            adversarial_train(&xs, &ys, &xs, &ys, &tc, &dc, None),
            Err(Error::Parameter(_))
        ));
        let dc2 = DefenseConfig::default();
        assert!(matches!(
            noise_regularized_train(&xs, &ys, &xs, &ys, &tc, &dc2),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn invalid_defense_config_rejected() {
        let bad_mix = DefenseConfig {
            adv_mix_ratio: 1.5,
            ..Default::default()
        };
        assert!(bad_mix.validate().is_err());
        let bad_sigma = DefenseConfig {
            noise_sigma: -0.1,
            ..Default::default()
        };
        assert!(bad_sigma.validate().is_err());
    }
}
