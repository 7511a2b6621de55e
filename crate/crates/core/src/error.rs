use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("duplicate handle `{0}` in roster")]
    DuplicateHandle(String),

    #[error("duplicate example id `{0}`")]
    DuplicateId(String),

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class `{0}` has no members")]
    EmptyClass(&'static str),

    #[error("need both classes present, found only `{0}`")]
    SingleClass(&'static str),

    #[error("class `{class}` has {count} members, fewer than k = {k}")]
    ClassSmallerThanK {
        class: &'static str,
        count: usize,
        k: usize,
    },

    #[error("row {0} contains a non-finite feature value")]
    NonFinite(usize),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value {value} out of range [{lo}, {hi}] for {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("zero-variance scores for class `{0}`; pass an explicit bandwidth")]
    ZeroVariance(&'static str),

    #[error("{family} scorer failed: {source}")]
    Scorer {
        family: &'static str,
        #[source]
        source: ScorerError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures from an individual scorer family. Kept separate so callers can
/// tell transport problems from protocol violations.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("empty text")]
    EmptyText,

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("response missing attribute `{0}`")]
    MissingAttribute(String),

    #[error("score {value} for `{attribute}` outside [0, 1]")]
    OutOfRange { attribute: String, value: f64 },

    #[error("timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("hate model not trained: {0}")]
    Training(String),
}
