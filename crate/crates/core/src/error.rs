use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient candidates: requested {requested}, only {available} available")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("constant response: variance is zero")]
    ConstantResponse,

    #[error("all lag bins are empty")]
    AllBinsEmpty,

    #[error("dead zone exhausts data: every fold was skipped (r_delta = {r_delta})")]
    DeadZoneExhaustsData { r_delta: f64 },

    #[error("fold {fold} skipped in strict mode: {reason}")]
    StrictSkip { fold: usize, reason: String },

    #[error("nothing left to test: all {0} records were selected for training")]
    NothingToTest(usize),

    #[error("target {target} unreachable; achievable metric range is [{min}, {max}]")]
    TargetUnreachable { target: f64, min: f64, max: f64 },

    #[error("covariance factorization failed; add nugget jitter (e.g. nugget = 1e-6 * sill)")]
    Factorization,

    #[error("every area pair was skipped")]
    AllPairsSkipped,
}

impl Error {
    /// True for errors caused by bad input or configuration rather than by
    /// the computation itself.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Empty(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
        )
    }
}
