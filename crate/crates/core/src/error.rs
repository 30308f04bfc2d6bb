use chrono::NaiveDate;
use thiserror::Error;

/// Errors produced anywhere in the forecasting library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("resolution error at line {line}: {message}")]
    Resolution { line: usize, message: String },

    #[error("duplicate timestamp {timestamp} at line {line}")]
    Duplicate { line: usize, timestamp: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("sequence dispersion {dispersion:e} is below the degeneracy threshold {threshold:e}")]
    DegenerateDispersion { dispersion: f64, threshold: f64 },

    #[error("no admissible training pairs for {weekday} before {cutoff}")]
    EmptyTrainingSet { weekday: String, cutoff: NaiveDate },

    #[error("percentage error undefined: actual value is zero at index {index}")]
    ZeroActual { index: usize },

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
