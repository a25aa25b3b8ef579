//! Training-only scaler and one-hot encoder.
//!
//! Numeric features standardize to zero mean and unit standard deviation so
//! the l-infinity attack budget lives in one shared normalized space.
//! Categoricals one-hot encode with a reserved unknown bucket; whole blocks
//! can then be frozen by the attack mask when the feature is immutable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::clean::percentile;
use crate::dataio::schema::{DatasetSchema, FeatureKind};
use crate::dataio::table::RawTable;
use crate::error::{Error, Result};

/// One encoded column of the model-space feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    /// Standardized numeric feature.
    Numeric {
        feature: String,
        mean: f64,
        /// Population standard deviation over the training split.
        std: f64,
        /// Train-split clip quantile values, original units.
        clip_lo: f64,
        clip_hi: f64,
        /// Declared bounds, original units.
        lower: Option<f64>,
        upper: Option<f64>,
        immutable: bool,
    },
    /// One indicator column of a categorical block; `category == None` is the
    /// reserved unknown bucket.
    OneHot {
        feature: String,
        category: Option<String>,
        immutable: bool,
    },
}

impl ColumnRole {
    pub fn feature_name(&self) -> &str {
        match self {
            ColumnRole::Numeric { feature, .. } | ColumnRole::OneHot { feature, .. } => feature,
        }
    }

    pub fn is_immutable(&self) -> bool {
        match self {
            ColumnRole::Numeric { immutable, .. } | ColumnRole::OneHot { immutable, .. } => {
                *immutable
            }
        }
    }

    /// Label used in reports and attributions, e.g. `util` or `segment=retail`.
    pub fn label(&self) -> String {
        match self {
            ColumnRole::Numeric { feature, .. } => feature.clone(),
            ColumnRole::OneHot {
                feature,
                category: Some(c),
                ..
            } => format!("{feature}={c}"),
            ColumnRole::OneHot {
                feature,
                category: None,
                ..
            } => format!("{feature}=<unknown>"),
        }
    }
}

/// Fitted preprocessing state; part of the model checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<ColumnRole>,
    /// Known categories per categorical feature, in encoding order.
    pub categories: BTreeMap<String, Vec<String>>,
    /// Train-split imputation state: numeric medians and categorical modes.
    pub numeric_medians: BTreeMap<String, f64>,
    pub categorical_modes: BTreeMap<String, String>,
    /// Zero-variance numeric features dropped during fit.
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Encoded rows ready for the model.
#[derive(Debug, Clone)]
pub struct EncodedData {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Row indices into the source table, for joins back to raw values.
    pub source_rows: Vec<usize>,
}

impl EncodedData {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }
}

/// Fit preprocessing state on the given (cleaned) rows only.
pub fn fit_preprocessor(
    table: &RawTable,
    schema: &DatasetSchema,
    train_indices: &[usize],
) -> Result<Preprocessor> {
    if train_indices.is_empty() {
        return Err(Error::Data("cannot fit preprocessor on zero rows".into()));
    }
    let mut columns = Vec::new();
    let mut categories = BTreeMap::new();
    let mut numeric_medians = BTreeMap::new();
    let mut categorical_modes = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();

    for feature in &schema.features {
        let col = table
            .column_index(&feature.name)
            .ok_or_else(|| Error::Schema(format!("missing column `{}`", feature.name)))?;
        match feature.kind {
            FeatureKind::Numeric => {
                let mut vals: Vec<f64> = train_indices
                    .iter()
                    .filter_map(|&i| table.rows[i][col].as_num())
                    .collect();
                if vals.is_empty() {
                    return Err(Error::Data(format!(
                        "numeric column `{}` empty on the training split",
                        feature.name
                    )));
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                numeric_medians.insert(feature.name.clone(), median_of_sorted(&vals));
                if std <= 0.0 {
                    warnings.push(format!(
                        "numeric feature `{}` has zero variance on the training split; dropped",
                        feature.name
                    ));
                    dropped.push(feature.name.clone());
                    continue;
                }
                columns.push(ColumnRole::Numeric {
                    feature: feature.name.clone(),
                    mean,
                    std,
                    clip_lo: percentile(&vals, schema.clip_quantiles.0),
                    clip_hi: percentile(&vals, schema.clip_quantiles.1),
                    lower: feature.lower,
                    upper: feature.upper,
                    immutable: feature.immutable,
                });
            }
            FeatureKind::Categorical => {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for &i in train_indices {
                    if let Some(s) = table.rows[i][col].as_str() {
                        *counts.entry(s.to_string()).or_insert(0) += 1;
                    }
                }
                if counts.is_empty() {
                    return Err(Error::Data(format!(
                        "categorical column `{}` empty on the training split",
                        feature.name
                    )));
                }
                let mode = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(c, _)| c.clone())
                    .unwrap();
                categorical_modes.insert(feature.name.clone(), mode);
                let known: Vec<String> = counts.into_keys().collect();
                for cat in &known {
                    columns.push(ColumnRole::OneHot {
                        feature: feature.name.clone(),
                        category: Some(cat.clone()),
                        immutable: feature.immutable,
                    });
                }
                // Reserved bucket for categories unseen at fit time.
                columns.push(ColumnRole::OneHot {
                    feature: feature.name.clone(),
                    category: None,
                    immutable: feature.immutable,
                });
                categories.insert(feature.name.clone(), known);
            }
        }
    }

    Ok(Preprocessor {
        columns,
        categories,
        numeric_medians,
        categorical_modes,
        dropped,
        warnings,
    })
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl Preprocessor {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_labels(&self) -> Vec<String> {
        self.columns.iter().map(ColumnRole::label).collect()
    }

    /// Encode the selected rows: standardize numerics, one-hot categoricals,
    /// route unseen categories to the unknown bucket, impute stragglers with
    /// train statistics.
    pub fn transform(
        &self,
        table: &RawTable,
        schema: &DatasetSchema,
        indices: &[usize],
    ) -> Result<EncodedData> {
        let labels_all = table.labels(schema)?;
        let col_of: BTreeMap<&str, usize> = table
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let mut x = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &ri in indices {
            let row = table
                .rows
                .get(ri)
                .ok_or_else(|| Error::Data(format!("row index {ri} out of range")))?;
            let mut enc = Vec::with_capacity(self.columns.len());
            let mut i = 0;
            while i < self.columns.len() {
                match &self.columns[i] {
                    ColumnRole::Numeric {
                        feature, mean, std, ..
                    } => {
                        let src = *col_of
                            .get(feature.as_str())
                            .ok_or_else(|| Error::Schema(format!("missing column `{feature}`")))?;
                        let v = row[src]
                            .as_num()
                            .unwrap_or_else(|| self.numeric_medians[feature]);
                        enc.push((v - mean) / std);
                        i += 1;
                    }
                    ColumnRole::OneHot { feature, .. } => {
                        let src = *col_of
                            .get(feature.as_str())
                            .ok_or_else(|| Error::Schema(format!("missing column `{feature}`")))?;
                        let raw = row[src]
                            .as_str()
                            .map(str::to_string)
                            .unwrap_or_else(|| self.categorical_modes[feature].clone());
                        let known = &self.categories[feature];
                        let hot = known.iter().position(|c| *c == raw);
                        let block = known.len() + 1;
                        for j in 0..block {
                            let on = match hot {
                                Some(k) => j == k,
                                None => j == block - 1, // unknown bucket
                            };
                            enc.push(if on { 1.0 } else { 0.0 });
                        }
                        i += block;
                    }
                }
            }
            x.push(enc);
            labels.push(labels_all[ri]);
        }
        Ok(EncodedData {
            x,
            labels,
            source_rows: indices.to_vec(),
        })
    }

    /// Map one encoded row back to original units: numerics un-standardize,
    /// one-hot blocks decode to the highest-activation category label.
    pub fn inverse_transform_row(&self, x: &[f64]) -> Result<Vec<(String, String)>> {
        if x.len() != self.columns.len() {
            return Err(Error::Shape(format!(
                "row has {} columns, preprocessor expects {}",
                x.len(),
                self.columns.len()
            )));
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.columns.len() {
            match &self.columns[i] {
                ColumnRole::Numeric {
                    feature, mean, std, ..
                } => {
                    let v = x[i] * std + mean;
                    out.push((feature.clone(), format!("{v:.4}")));
                    i += 1;
                }
                ColumnRole::OneHot { feature, .. } => {
                    let known = &self.categories[feature];
                    let block = known.len() + 1;
                    let (best, _) = x[i..i + block]
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .unwrap();
                    let label = if best < known.len() {
                        known[best].clone()
                    } else {
                        "<unknown>".to_string()
                    };
                    out.push((feature.clone(), label));
                    i += block;
                }
            }
        }
        Ok(out)
    }

    /// Un-standardize a single numeric column value.
    pub fn inverse_numeric(&self, column_index: usize, value: f64) -> Option<f64> {
        match &self.columns[column_index] {
            ColumnRole::Numeric { mean, std, .. } => Some(value * std + mean),
            ColumnRole::OneHot { .. } => None,
        }
    }
}
