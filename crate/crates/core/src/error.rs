use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PoiError> = std::result::Result<T, E>;

/// Broad failure category, used to pick process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum PoiError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported process kind for this operation: {0}")]
    UnsupportedKind(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("design matrix is rank deficient ({rows}x{cols})")]
    RankDeficient { rows: usize, cols: usize },

    #[error("covariance factorization failed after nugget {nugget:e} (p = {dim}, max diagonal = {max_diag:e})")]
    Factorization {
        dim: usize,
        nugget: f64,
        max_diag: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl PoiError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PoiError::InvalidGrid(_)
            | PoiError::InvalidParameter(_)
            | PoiError::UnsupportedKind(_)
            | PoiError::Config(_) => ErrorClass::Config,
            PoiError::DimensionMismatch(_)
            | PoiError::InvalidData(_)
            | PoiError::Parse { .. }
            | PoiError::Io { .. } => ErrorClass::Data,
            PoiError::RankDeficient { .. }
            | PoiError::Factorization { .. }
            | PoiError::Numerical(_) => ErrorClass::Numerical,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PoiError::Io {
            path: path.into(),
            source,
        }
    }
}
