use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Each variant corresponds to one failure class the
/// command-line front end maps onto a distinct exit status.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A malformed line in a CSV or key-value input.
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: u64,
        msg: String,
    },

    /// A key (sector, pollutant, column) that the input does not contain.
    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    /// A model or optimizer parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("duplicate (sector, year) entries: {0}")]
    Duplicate(String),

    /// An operation that is not defined for the given topology or state.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("divergence: {0}")]
    Divergence(String),

    /// A metric whose defining formula has a zero denominator on this input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("model format error at line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },

    /// A model and a dataset (or normalizer) that do not belong together.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
