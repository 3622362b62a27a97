use std::path::PathBuf;

use thiserror::Error;

use crate::model::Basis;

/// Errors produced by the library.
///
/// The harness maps these onto process exit codes, so the variants are kept
/// coarse: bad input, infeasible design, numeric failure and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("basis mismatch: expected {expected}, got {found}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("density is negative on the validation grid (min {min:.6})")]
    NegativeDensity { min: f64 },

    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("no calibration table for n = {n} and on-demand calibration is disabled")]
    MissingCalibration { n: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for invalid configuration, 3 for an infeasible
    /// design, 4 for a numeric failure and 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleDesign(_) => 3,
            Error::NumericFailure(_) => 4,
            Error::Io { .. } | Error::Csv(_) => 1,
            Error::InvalidInput(_)
            | Error::InvalidAlpha(_)
            | Error::LengthMismatch { .. }
            | Error::BasisMismatch { .. }
            | Error::NegativeDensity { .. }
            | Error::MissingCalibration { .. }
            | Error::Json(_) => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
