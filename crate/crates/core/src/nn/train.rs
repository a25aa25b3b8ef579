//! Adam training loop with best-epoch checkpointing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::auroc_from;
use crate::nn::mlp::{batch_gradients, predict_proba, MlpGrads, MlpParams};
use crate::seed::{derive_seed, rng_from};

fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    128
}
fn default_dropout() -> f64 {
    0.3
}
fn default_epochs() -> usize {
    50
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_hidden1() -> usize {
    128
}
fn default_hidden2() -> usize {
    64
}

/// Training hyperparameters. Hidden widths are configurable so tests can
/// build tiny surrogates; every other default follows the usual recipe for
/// this architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Absent means: derive from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_hidden1")]
    pub hidden1: usize,
    #[serde(default = "default_hidden2")]
    pub hidden2: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            dropout_p: default_dropout(),
            epochs: default_epochs(),
            seed: None,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            hidden1: default_hidden1(),
            hidden2: default_hidden2(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Parameter("dropout_p must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Parameter("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_auroc: f64,
}

/// Best-epoch parameters plus the training trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub best_val_auroc: f64,
    /// 0 means the untrained initialization won.
    pub best_epoch: usize,
    pub epoch_log: Vec<EpochStats>,
}

/// Batch rewrite hook: defenses replace or perturb batch rows against the
/// current parameters before the gradient step.
pub type Augmenter<'a> =
    &'a mut dyn FnMut(&MlpParams, usize, usize, &mut Vec<Vec<f64>>, &[u8]) -> Result<()>;

struct Adam {
    m: MlpGrads,
    v: MlpGrads,
    t: u64,
}

impl Adam {
    fn new(p: &MlpParams) -> Self {
        Adam {
            m: MlpGrads::zeros(p),
            v: MlpGrads::zeros(p),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut MlpParams, g: &MlpGrads, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2, eps, lr) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        update(&mut params.w1, &g.w1, &mut self.m.w1, &mut self.v.w1);
        update(&mut params.b1, &g.b1, &mut self.m.b1, &mut self.v.b1);
        update(&mut params.w2, &g.w2, &mut self.m.w2, &mut self.v.w2);
        update(&mut params.b2, &g.b2, &mut self.m.b2, &mut self.v.b2);
        update(&mut params.w3, &g.w3, &mut self.m.w3, &mut self.v.w3);
        // Scalar b3 through the same formulas.
        let mut p3 = [params.b3];
        let g3 = [g.b3];
        let mut m3 = [self.m.b3];
        let mut v3 = [self.v.b3];
        update(&mut p3, &g3, &mut m3, &mut v3);
        params.b3 = p3[0];
        self.m.b3 = m3[0];
        self.v.b3 = v3[0];
    }
}

/// Train with Adam on BCE, evaluating validation AUROC in eval mode after
/// every epoch and returning the best-epoch parameters. Deterministic for a
/// fixed `cfg.seed`: shuffle order, dropout masks and initialization all
/// derive from it.
pub fn train(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_augment(train_x, train_y, val_x, val_y, cfg, None)
}

/// [`train`] with a batch rewrite hook; the optimizer path is otherwise
/// identical, so a no-op hook reproduces plain training bit for bit.
pub fn train_with_augment(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    cfg: &TrainConfig,
    mut augment: Option<Augmenter<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_x.is_empty() || train_x.len() != train_y.len() {
        return Err(Error::Shape("training rows and labels must align".into()));
    }
    if val_x.is_empty() || val_x.len() != val_y.len() {
        return Err(Error::Shape("validation set must be nonempty".into()));
    }
    let d = train_x[0].len();

    let seed = cfg.seed.unwrap_or(0);
    let mut init_rng = rng_from(derive_seed(seed, "init"));
    let mut shuffle_rng = rng_from(derive_seed(seed, "shuffle"));
    let mut dropout_rng = rng_from(derive_seed(seed, "dropout"));

    let mut params = MlpParams::init(d, cfg.hidden1, cfg.hidden2, &mut init_rng);
    let mut adam = Adam::new(&params);

    let initial_auroc = auroc_from(&predict_proba(&params, val_x)?, val_y)?;
    let mut best_params = params.clone();
    let mut best_auroc = initial_auroc;
    let mut best_epoch = 0;
    let mut epoch_log = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut bx: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let by: Vec<u8> = chunk.iter().map(|&i| train_y[i]).collect();
            if let Some(aug) = augment.as_mut() {
                aug(&params, epoch, batch_idx, &mut bx, &by)?;
            }
            let (grads, loss) =
                batch_gradients(&params, &bx, &by, Some((cfg.dropout_p, &mut dropout_rng)))?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: format!("non-finite loss {loss}"),
                });
            }
            adam.step(&mut params, &grads, cfg);
            epoch_loss += loss;
            batches += 1;
        }
        let val_auroc = auroc_from(&predict_proba(&params, val_x)?, val_y)?;
        epoch_log.push(EpochStats {
            epoch,
            mean_train_loss: epoch_loss / batches as f64,
            val_auroc,
        });
        if val_auroc > best_auroc {
            best_auroc = val_auroc;
            best_epoch = epoch;
            best_params = params.clone();
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        best_val_auroc: best_auroc,
        best_epoch,
        epoch_log,
    })
}
