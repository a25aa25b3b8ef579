//! Dataset-level cleaning: imputation, outlier clipping, target normalization.

use crate::dataio::schema::{DatasetSchema, FeatureKind};
use crate::dataio::table::{Cell, RawTable};
use crate::error::{Error, Result};

/// Empirical quantile by the generalized inverse: the smallest sorted value
/// whose empirical CDF reaches `q`. `sorted` must be ascending and nonempty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if q <= 0.0 {
        return sorted[0];
    }
    if q >= 1.0 {
        return sorted[n - 1];
    }
    // Smallest k in 1..=n with k/n >= q; start from the float ceil and adjust
    // so boundary rounding cannot pick the wrong order statistic.
    let mut k = ((q * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= q {
        k -= 1;
    }
    while k < n && (k as f64) / (n as f64) < q {
        k += 1;
    }
    sorted[k - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Most frequent category; ties break to the lexicographically smallest so
/// cleaning is deterministic.
fn mode(values: &[&str]) -> String {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(v, _)| v.to_string())
        .expect("mode of nonempty slice")
}

/// Clean a loaded table: impute missing cells (numeric median, categorical
/// mode), then clip numeric columns to the schema's quantiles, and rewrite
/// the target column to `0`/`1`. Non-feature columns pass through untouched.
pub fn clean(raw: &RawTable, schema: &DatasetSchema) -> Result<RawTable> {
    schema.validate()?;
    let mut out = raw.clone();
    let target_idx = out
        .column_index(&schema.target)
        .ok_or_else(|| Error::Schema(format!("missing target column `{}`", schema.target)))?;

    for feature in &schema.features {
        let col = out
            .column_index(&feature.name)
            .ok_or_else(|| Error::Schema(format!("missing column `{}`", feature.name)))?;
        match feature.kind {
            FeatureKind::Numeric => {
                let mut present: Vec<f64> =
                    out.column(col).filter_map(|c| c.as_num()).collect();
                if present.is_empty() {
                    return Err(Error::Data(format!(
                        "column `{}` has no usable values",
                        feature.name
                    )));
                }
                present.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let med = median(&present);
                // Impute first, then clip: quantiles are taken over the
                // imputed column so repeated cleaning is a fixed point.
                for row in &mut out.rows {
                    if row[col] == Cell::Missing {
                        row[col] = Cell::Num(med);
                    }
                }
                let mut imputed: Vec<f64> =
                    out.column(col).filter_map(|c| c.as_num()).collect();
                imputed.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let lo = percentile(&imputed, schema.clip_quantiles.0);
                let hi = percentile(&imputed, schema.clip_quantiles.1);
                for row in &mut out.rows {
                    if let Cell::Num(v) = &mut row[col] {
                        *v = v.clamp(lo, hi);
                    }
                }
            }
            FeatureKind::Categorical => {
                let present: Vec<&str> =
                    out.column(col).filter_map(|c| c.as_str()).collect();
                if present.is_empty() {
                    return Err(Error::Data(format!(
                        "column `{}` has no usable values",
                        feature.name
                    )));
                }
                let m = mode(&present);
                for row in &mut out.rows {
                    if row[col] == Cell::Missing {
                        row[col] = Cell::Str(m.clone());
                    }
                }
            }
        }
    }

    if !out.target_normalized {
        for row in &mut out.rows {
            let is_pos = match &row[target_idx] {
                Cell::Str(s) => *s == schema.positive_label,
                Cell::Num(v) => super::table::format_raw(*v) == schema.positive_label,
                Cell::Missing => return Err(Error::Label("target has missing values".into())),
            };
            row[target_idx] = Cell::Str(if is_pos { "1" } else { "0" }.to_string());
        }
        out.target_normalized = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::schema::{DatasetSchema, FeatureSpec};

    fn schema_numeric() -> DatasetSchema {
        DatasetSchema {
            features: vec![FeatureSpec::numeric("x")],
            target: "y".into(),
            positive_label: "1".into(),
            ids: vec![],
            clip_quantiles: (0.01, 0.99),
        }
    }

    fn table(cells: Vec<Cell>, labels: Vec<&str>) -> RawTable {
        RawTable {
            columns: vec!["x".into(), "y".into()],
            rows: cells
                .into_iter()
                .zip(labels)
                .map(|(c, l)| vec![c, Cell::Str(l.into())])
                .collect(),
            target_normalized: false,
        }
    }

    #[test]
    fn median_imputation() {
        let t = table(
            vec![Cell::Num(1.0), Cell::Missing, Cell::Num(3.0)],
            vec!["0", "1", "0"],
        );
        let c = clean(&t, &schema_numeric()).unwrap();
        assert_eq!(c.rows[1][0], Cell::Num(2.0));
    }

    #[test]
    fn mode_imputation() {
        let schema = DatasetSchema {
            features: vec![FeatureSpec::categorical("c")],
            target: "y".into(),
            positive_label: "1".into(),
            ids: vec![],
            clip_quantiles: (0.01, 0.99),
        };
        let t = RawTable {
            columns: vec!["c".into(), "y".into()],
            rows: vec![
                vec![Cell::Str("A".into()), Cell::Str("0".into())],
                vec![Cell::Str("A".into()), Cell::Str("1".into())],
                vec![Cell::Missing, Cell::Str("0".into())],
            ],
            target_normalized: false,
        };
        let c = clean(&t, &schema).unwrap();
        assert_eq!(c.rows[2][0], Cell::Str("A".into()));
    }

    #[test]
    fn clip_matches_sorted_percentile_oracle() {
        // 100 values 1..=100. Oracle: scan the sorted array for the first
        // value whose CDF reaches q.
        let vals: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let oracle = |q: f64| {
            let n = vals.len();
            *vals
                .iter()
                .enumerate()
                .find(|(i, _)| (i + 1) as f64 / n as f64 >= q)
                .map(|(_, v)| v)
                .unwrap()
        };
        let t = table(
            vals.iter().map(|&v| Cell::Num(v)).collect(),
            (0..100).map(|i| if i % 5 == 0 { "1" } else { "0" }).collect(),
        );
        let c = clean(&t, &schema_numeric()).unwrap();
        let cleaned: Vec<f64> = c.column(0).filter_map(|x| x.as_num()).collect();
        let lo = oracle(0.01);
        let hi = oracle(0.99);
        assert_eq!(cleaned.iter().cloned().fold(f64::INFINITY, f64::min), lo);
        assert_eq!(cleaned.iter().cloned().fold(f64::NEG_INFINITY, f64::max), hi);
        assert_eq!(lo, 1.0);
        assert_eq!(hi, 99.0);
    }

    #[test]
    fn cleaning_is_idempotent() {
        let t = table(
            vec![
                Cell::Num(-50.0),
                Cell::Missing,
                Cell::Num(3.0),
                Cell::Num(4.0),
                Cell::Num(900.0),
            ],
            vec!["0", "1", "0", "1", "0"],
        );
        let once = clean(&t, &schema_numeric()).unwrap();
        let twice = clean(&once, &schema_numeric()).unwrap();
        assert_eq!(once.rows, twice.rows);
    }

    #[test]
    fn all_missing_column_is_data_error() {
        let t = table(vec![Cell::Missing, Cell::Missing], vec!["0", "1"]);
        assert!(matches!(
            clean(&t, &schema_numeric()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn idempotent_with_renamed_positive_label() {
        let schema = DatasetSchema {
            features: vec![FeatureSpec::numeric("x")],
            target: "y".into(),
            positive_label: "yes".into(),
            ids: vec![],
            clip_quantiles: (0.01, 0.99),
        };
        let t = table(vec![Cell::Num(1.0), Cell::Num(2.0)], vec!["yes", "no"]);
        let once = clean(&t, &schema).unwrap();
        let twice = clean(&once, &schema).unwrap();
        assert_eq!(once.rows, twice.rows);
        assert_eq!(once.labels(&schema).unwrap(), vec![1, 0]);
    }

    #[test]
    fn target_normalized_to_01() {
        let schema = DatasetSchema {
            features: vec![FeatureSpec::numeric("x")],
            target: "y".into(),
            positive_label: "yes".into(),
            ids: vec![],
            clip_quantiles: (0.01, 0.99),
        };
        let t = table(vec![Cell::Num(1.0), Cell::Num(2.0)], vec!["yes", "no"]);
        let c = clean(&t, &schema).unwrap();
        assert_eq!(c.rows[0][1], Cell::Str("1".into()));
        assert_eq!(c.rows[1][1], Cell::Str("0".into()));
    }
}
