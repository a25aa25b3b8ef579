//! From-scratch two-hidden-layer MLP with exact input gradients.
//!
//! The network is deliberately small and explicit: ReLU activations, inverted
//! dropout during training, a single output logit, Adam on binary
//! cross-entropy. Everything an attack needs (per-row gradients of the loss
//! with respect to the input) is computed by hand-written backprop, checked
//! against finite differences in the test suite.

mod checkpoint;
mod loss;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, MlpCheckpoint, CHECKPOINT_VERSION};
pub use loss::{bce_with_logits_row, loss_bce, sigmoid};
pub use mlp::{
    forward, input_gradient, input_gradient_row, logit_row, predict_proba, predict_proba_seq,
    BatchForward, MlpGrads, MlpParams, RowCache,
};
pub use train::{train, train_with_augment, Augmenter, EpochStats, TrainConfig, TrainOutcome};
