//! Crate-wide error type.

use thiserror::Error;

/// Unified error type; variants mirror the failure classes surfaced by the
/// public API so callers can match on the kind of contract violation.
#[derive(Debug, Error)]
pub enum Error {
    /// Dataset schema inconsistent with the data (missing column, bad bounds).
    #[error("schema error: {0}")]
    Schema(String),

    /// Target column does not encode a binary label.
    #[error("label error: {0}")]
    Label(String),

    /// Malformed or degenerate data (empty file, all-missing column).
    #[error("data error: {0}")]
    Data(String),

    /// Matrix/vector dimension mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Persisted artifact cannot be decoded (version mismatch, corruption).
    #[error("format error: {0}")]
    Format(String),

    /// Metric undefined for the given input (single-class set, all-tied ranks).
    #[error("metric error: {0}")]
    Metric(String),

    /// Invalid configuration parameter.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Bootstrap / resampling failure.
    #[error("statistics error: {0}")]
    Stats(String),

    /// Training diverged or produced non-finite loss.
    #[error("training error at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// Attribution regression system could not be solved.
    #[error("solver error: {0}")]
    Solver(String),

    /// LLM provider failure after retries, or unparseable provider output.
    #[error("provider error: {0}")]
    Provider(String),

    /// Report assembly received inconsistent blocks.
    #[error("assembly error: {0}")]
    Assembly(String),

    /// I/O failure with path context.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach path context to an I/O failure.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
