//! Column-ordered raw table and CSV ingestion.

use std::collections::BTreeSet;
use std::path::Path;

use crate::dataio::schema::{DatasetSchema, FeatureKind};
use crate::error::{Error, Result};

/// One table cell. Numeric columns parse to `Num`, categorical stay `Str`,
/// blanks and unparseable numerics become `Missing`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Str(String),
    Missing,
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Str(s) => Some(s),
            _ => None,
        }
    }
}

/// Rectangular table with named columns, stored row-major.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Set by [`crate::dataio::clean`] once the target column is rewritten to
    /// `0`/`1`; a second cleaning pass must not remap it.
    pub target_normalized: bool,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Iterate one column's cells.
    pub fn column(&self, idx: usize) -> impl Iterator<Item = &Cell> {
        self.rows.iter().map(move |r| &r[idx])
    }

    /// Binary labels from the target column: 1 for `positive_label` (or for
    /// the literal `"1"` once the target has been normalized), 0 otherwise.
    pub fn labels(&self, schema: &DatasetSchema) -> Result<Vec<u8>> {
        let t = self
            .column_index(&schema.target)
            .ok_or_else(|| Error::Schema(format!("missing target column `{}`", schema.target)))?;
        let positive = if self.target_normalized {
            "1"
        } else {
            schema.positive_label.as_str()
        };
        Ok(self
            .rows
            .iter()
            .map(|r| match &r[t] {
                Cell::Str(s) if s == positive => 1,
                Cell::Num(v) if format_raw(*v) == positive => 1,
                _ => 0,
            })
            .collect())
    }
}

/// Canonical rendering of a raw numeric cell, used for target matching and
/// CSV output. Integral values print without a trailing `.0`.
pub(crate) fn format_raw(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Load a CSV file against a schema.
///
/// Every schema-named column (features, target, ids) must be present; extra
/// columns are retained so exposure fields can be looked up later. The target
/// column must hold exactly two distinct raw values, one of which is the
/// schema's `positive_label`.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<RawTable> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad header in {}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let present: BTreeSet<&str> = headers.iter().map(|h| h.as_str()).collect();
    for f in &schema.features {
        if !present.contains(f.name.as_str()) {
            return Err(Error::Schema(format!("missing column `{}`", f.name)));
        }
    }
    if !present.contains(schema.target.as_str()) {
        return Err(Error::Schema(format!("missing column `{}`", schema.target)));
    }
    for id in &schema.ids {
        if !present.contains(id.as_str()) {
            return Err(Error::Schema(format!("missing column `{id}`")));
        }
    }

    let kind_of: Vec<Option<FeatureKind>> = headers
        .iter()
        .map(|h| schema.feature(h).map(|f| f.kind))
        .collect();
    let target_idx = headers.iter().position(|h| *h == schema.target).unwrap();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("csv parse: {e}")))?;
        let row: Vec<Cell> = record
            .iter()
            .enumerate()
            .map(|(i, field)| parse_cell(field, kind_of[i], i == target_idx))
            .collect();
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} contains no data rows", path.display())));
    }

    let table = RawTable {
        columns: headers,
        rows,
        target_normalized: false,
    };
    check_binary_target(&table, target_idx, schema)?;
    Ok(table)
}

fn parse_cell(field: &str, kind: Option<FeatureKind>, is_target: bool) -> Cell {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Cell::Missing;
    }
    if is_target {
        // Targets stay raw strings so positive_label matching is textual.
        return Cell::Str(trimmed.to_string());
    }
    match kind {
        Some(FeatureKind::Numeric) => match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Num(v),
            _ => Cell::Missing,
        },
        Some(FeatureKind::Categorical) => Cell::Str(trimmed.to_string()),
        // Non-schema column: keep numeric if it parses (exposure lookups).
        None => match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Num(v),
            _ => Cell::Str(trimmed.to_string()),
        },
    }
}

fn check_binary_target(table: &RawTable, target_idx: usize, schema: &DatasetSchema) -> Result<()> {
    let mut distinct = BTreeSet::new();
    for row in &table.rows {
        match &row[target_idx] {
            Cell::Str(s) => {
                distinct.insert(s.clone());
            }
            Cell::Num(v) => {
                distinct.insert(format_raw(*v));
            }
            Cell::Missing => {
                return Err(Error::Label("target column has missing values".into()));
            }
        }
        if distinct.len() > 2 {
            break;
        }
    }
    if distinct.len() > 2 {
        return Err(Error::Label(format!(
            "target `{}` has more than two distinct values: {:?}...",
            schema.target,
            distinct.iter().take(3).collect::<Vec<_>>()
        )));
    }
    if !distinct.contains(&schema.positive_label) {
        return Err(Error::Label(format!(
            "positive label `{}` never appears in target `{}`",
            schema.positive_label, schema.target
        )));
    }
    Ok(())
}

/// Write a table as RFC-4180 CSV with a header row and `\n` terminators.
pub fn write_csv(table: &RawTable, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(&table.columns)
        .map_err(|e| Error::Data(format!("csv write: {e}")))?;
    for row in &table.rows {
        let rec: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => format_raw(*v),
                Cell::Str(s) => s.clone(),
                Cell::Missing => String::new(),
            })
            .collect();
        w.write_record(&rec)
            .map_err(|e| Error::Data(format!("csv write: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::schema::FeatureSpec;
    use std::io::Write;

    fn toy_schema() -> DatasetSchema {
        DatasetSchema {
            features: vec![FeatureSpec::numeric("income"), FeatureSpec::numeric("age")],
            target: "default".into(),
            positive_label: "1".into(),
            ids: vec![],
            clip_quantiles: (0.01, 0.99),
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("income,age,default\n100,30,0\n200,40,1\n300,50,0\n");
        let t = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.rows[1][0], Cell::Num(200.0));
        assert_eq!(t.labels(&toy_schema()).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn missing_column_names_it() {
        let f = write_tmp("income,default\n100,0\n200,1\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("age"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn three_target_values_rejected() {
        let f = write_tmp("income,age,default\n1,2,0\n3,4,1\n5,6,2\n");
        assert!(matches!(
            load_csv(f.path(), &toy_schema()),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn empty_file_rejected() {
        let f = write_tmp("income,age,default\n");
        assert!(matches!(
            load_csv(f.path(), &toy_schema()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn blank_cells_become_missing() {
        let f = write_tmp("income,age,default\n,30,0\n200,,1\n");
        let t = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(t.rows[0][0], Cell::Missing);
        assert_eq!(t.rows[1][1], Cell::Missing);
    }

    #[test]
    fn csv_round_trip_bytes() {
        let f = write_tmp("income,age,default\n100,30,0\n200.5,40,1\n");
        let t = load_csv(f.path(), &toy_schema()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        write_csv(&t, &out).unwrap();
        let body = std::fs::read_to_string(&out).unwrap();
        assert_eq!(body, "income,age,default\n100,30,0\n200.5,40,1\n");
    }
}
