use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("charge mismatch: record has q={record}, density matrix has q={state}")]
    ChargeMismatch { record: usize, state: usize },

    #[error("degree {degree} needs at least {} data points, have {points}", degree + 1)]
    DegreeTooHigh { degree: usize, points: usize },

    #[error("singular value decomposition failed for a {rows}x{cols} design matrix")]
    SvdFailed { rows: usize, cols: usize },

    #[error("band k={k}: {source}")]
    Band {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Stable machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ContractViolation(_) => "contract_violation",
            Error::ChargeMismatch { .. } => "charge_mismatch",
            Error::DegreeTooHigh { .. } => "degree_too_high",
            Error::SvdFailed { .. } => "svd_failed",
            Error::Band { .. } => "band_failure",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Csv { .. } => "csv",
        }
    }
}
