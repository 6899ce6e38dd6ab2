use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("only one class present ({0} samples, all labelled {1:+})")]
    SingleClass(usize, i8),

    #[error("class {label:+} has {count} samples, fewer than the {k} folds requested")]
    FoldInfeasible { label: i8, count: usize, k: usize },

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{cell}` as a finite number")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        cell: String,
    },

    #[error("lambda {lambda} outside (0, {cap})")]
    LambdaOutOfRange { lambda: f64, cap: f64 },

    #[error("Woodbury middle matrix is singular (pivot {pivot:e} vs norm {norm:e}); lambda too close to an inverse eigenvalue")]
    SingularMiddle { pivot: f64, norm: f64 },

    #[error("dual Gram matrix is not positive semidefinite (min eigenvalue {min_eig:e}, norm {norm:e})")]
    NotPsd { min_eig: f64, norm: f64 },

    #[error("trivial dual: every multiplier is zero (C0 too small?)")]
    TrivialDual,

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("covariance is not symmetric positive definite")]
    NotSpd,

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
