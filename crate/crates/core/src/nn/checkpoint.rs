//! Versioned JSON model checkpoint.
//!
//! Parameters are stored as named row-major arrays with explicit dimensions;
//! portability over compactness. `load(save(c))` is lossless because JSON
//! floats are emitted in shortest round-trip form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Preprocessor;
use crate::error::{Error, Result};
use crate::nn::mlp::MlpParams;
use crate::nn::train::{TrainConfig, TrainOutcome};

pub const CHECKPOINT_VERSION: &str = "tabguard-checkpoint-v1";

/// Everything needed to score new data and reproduce the training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub version: String,
    pub params: MlpParams,
    pub preprocessor: Preprocessor,
    pub train_config: TrainConfig,
    pub best_val_auroc: f64,
    pub best_epoch: usize,
    pub schema_fingerprint: String,
}

impl MlpCheckpoint {
    pub fn from_outcome(
        outcome: &TrainOutcome,
        preprocessor: Preprocessor,
        train_config: TrainConfig,
        schema_fingerprint: String,
    ) -> Self {
        MlpCheckpoint {
            version: CHECKPOINT_VERSION.to_string(),
            params: outcome.params.clone(),
            preprocessor,
            train_config,
            best_val_auroc: outcome.best_val_auroc,
            best_epoch: outcome.best_epoch,
            schema_fingerprint,
        }
    }
}

pub fn save_checkpoint(ckpt: &MlpCheckpoint, path: &Path) -> Result<()> {
    ckpt.params.validate()?;
    let body = serde_json::to_string_pretty(ckpt)
        .map_err(|e| Error::Format(format!("checkpoint serialize: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpCheckpoint> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    // Check the version tag before strict decoding so a version mismatch is
    // reported as such rather than as an arbitrary missing-field error.
    let probe: serde_json::Value = serde_json::from_str(&body)
        .map_err(|e| Error::Format(format!("checkpoint {}: {e}", path.display())))?;
    match probe.get("version").and_then(|v| v.as_str()) {
        Some(v) if v == CHECKPOINT_VERSION => {}
        Some(v) => {
            return Err(Error::Format(format!(
                "checkpoint version `{v}` unsupported (expected `{CHECKPOINT_VERSION}`)"
            )))
        }
        None => return Err(Error::Format("checkpoint missing version field".into())),
    }
    let ckpt: MlpCheckpoint = serde_json::from_str(&body)
        .map_err(|e| Error::Format(format!("checkpoint {}: {e}", path.display())))?;
    ckpt.params.validate()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{fit_preprocessor, Cell, DatasetSchema, FeatureSpec, RawTable};
    use crate::seed::rng_from;

    fn toy_checkpoint() -> MlpCheckpoint {
        let schema = DatasetSchema {
            features: vec![FeatureSpec::numeric("a")],
            target: "y".into(),
            positive_label: "1".into(),
            ids: vec![],
            clip_quantiles: (0.01, 0.99),
        };
        let table = RawTable {
            columns: vec!["a".into(), "y".into()],
            rows: vec![
                vec![Cell::Num(0.0), Cell::Str("0".into())],
                vec![Cell::Num(2.0), Cell::Str("1".into())],
            ],
            target_normalized: true,
        };
        let pre = fit_preprocessor(&table, &schema, &[0, 1]).unwrap();
        let mut rng = rng_from(99);
        MlpCheckpoint {
            version: CHECKPOINT_VERSION.to_string(),
            params: MlpParams::init(1, 4, 3, &mut rng),
            preprocessor: pre,
            train_config: TrainConfig::default(),
            best_val_auroc: 0.875,
            best_epoch: 12,
            schema_fingerprint: schema.fingerprint(),
        }
    }

    #[test]
    fn round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ckpt = toy_checkpoint();
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params, ckpt.params);
        assert!(back.best_val_auroc == ckpt.best_val_auroc);
        assert_eq!(back.schema_fingerprint, ckpt.schema_fingerprint);
        // Saving the reloaded checkpoint reproduces the same bytes.
        let path2 = dir.path().join("model2.json");
        save_checkpoint(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&toy_checkpoint(), &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &body[..body.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut ckpt = toy_checkpoint();
        ckpt.version = "tabguard-checkpoint-v0".into();
        let body = serde_json::to_string(&ckpt).unwrap();
        std::fs::write(&path, body).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
