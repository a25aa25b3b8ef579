//! Dataset schema: per-feature metadata driving preprocessing and attack
//! masking.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::fingerprint_hex;

/// Feature type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Metadata for one input column.
///
/// `lower`/`upper` are bounds in original units (numeric features only) and
/// feed the domain projector. `immutable` marks audited fields the attacker
/// cannot touch; `sensitive` marks the fairness group key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default)]
    pub immutable: bool,
    #[serde(default)]
    pub sensitive: bool,
}

impl FeatureSpec {
    pub fn numeric(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Numeric,
            lower: None,
            upper: None,
            immutable: false,
            sensitive: false,
        }
    }

    pub fn categorical(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            lower: None,
            upper: None,
            immutable: false,
            sensitive: false,
        }
    }
}

fn default_clip() -> (f64, f64) {
    (0.01, 0.99)
}

/// Schema for a binary-target tabular dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<FeatureSpec>,
    /// Name of the target column.
    pub target: String,
    /// Raw target value mapped to label 1.
    pub positive_label: String,
    /// Identifier columns kept out of modeling.
    #[serde(default)]
    pub ids: Vec<String>,
    /// Outlier clip quantiles used by cleaning, as fractions in (0,1).
    #[serde(default = "default_clip")]
    pub clip_quantiles: (f64, f64),
}

impl DatasetSchema {
    /// Check structural invariants: unique feature names, target distinct
    /// from features, id columns disjoint, bound ordering, no bounds on
    /// categoricals.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if f.kind == FeatureKind::Categorical && (f.lower.is_some() || f.upper.is_some()) {
                return Err(Error::Schema(format!(
                    "categorical feature `{}` must not carry bounds",
                    f.name
                )));
            }
            if let (Some(lo), Some(hi)) = (f.lower, f.upper) {
                if lo > hi {
                    return Err(Error::Schema(format!(
                        "feature `{}` has lower bound {} > upper bound {}",
                        f.name, lo, hi
                    )));
                }
            }
        }
        if seen.contains(self.target.as_str()) {
            return Err(Error::Schema(format!(
                "target `{}` also listed as a feature",
                self.target
            )));
        }
        for id in &self.ids {
            if seen.contains(id.as_str()) || *id == self.target {
                return Err(Error::Schema(format!(
                    "id column `{}` overlaps features or target",
                    id
                )));
            }
        }
        let (lo, hi) = self.clip_quantiles;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Schema(format!(
                "clip quantiles ({lo}, {hi}) must satisfy 0 < lo < hi < 1"
            )));
        }
        Ok(())
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    /// The sensitive (fairness group) feature, if any.
    pub fn sensitive_feature(&self) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.sensitive)
    }

    /// Stable content fingerprint; stored in checkpoints so inference against
    /// a different schema is flagged.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serializes");
        fingerprint_hex(canonical.as_bytes())
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self).expect("schema serializes");
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let schema: DatasetSchema = serde_json::from_str(&body)
            .map_err(|e| Error::Format(format!("schema file {}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }
}
