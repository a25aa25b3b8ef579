//! Adversarial robustness evaluation and hardening for tabular binary classifiers.
//!
//! `tabguard` trains a small MLP scorer on any schema-described tabular
//! dataset, attacks it with l-infinity bounded FGSM/PGD perturbations kept
//! financially plausible by a domain projector, and quantifies the damage
//! across discrimination, calibration, economic tail risk, drift, fairness,
//! explanation stability and semantic robustness, with bootstrap confidence
//! intervals on the headline numbers.
//!
//! Row-sharded hot paths (attacks, Monte Carlo loss simulation, bootstrap
//! replicates, per-instance SHAP) run on rayon when the default `parallel`
//! feature is enabled and fall back to plain iterators otherwise; either way
//! results are bit-identical because every work item derives its own seed.

pub mod attacks;
pub mod dataio;
pub mod defense;
pub mod driftfair;
pub mod econrisk;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod semantic;
pub mod stats;

pub use error::{Error, Result};
