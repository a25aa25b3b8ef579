//! Tabular ingestion: schema, CSV loading, cleaning, encoding, splits and a
//! seeded synthetic credit dataset for desk-scale experiments.

mod clean;
mod preprocess;
mod schema;
mod split;
mod synth;
mod table;

pub use clean::{clean, percentile};
pub use preprocess::{fit_preprocessor, ColumnRole, EncodedData, Preprocessor};
pub use schema::{DatasetSchema, FeatureKind, FeatureSpec};
pub use split::{stratified_split, Splits};
pub use synth::generate_synthetic_credit;
pub use table::{load_csv, write_csv, Cell, RawTable};
