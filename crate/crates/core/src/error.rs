use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the perturbation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entry at ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("dimension mismatch: {context} (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("SVD failed to converge within {max_iter} iterations")]
    SvdConvergence { max_iter: usize },

    #[error("eigendecomposition failed to converge within {max_iter} iterations")]
    EigenConvergence { max_iter: usize },

    #[error("truncation rank {r} out of range 1..={k}")]
    RankOutOfRange { r: usize, k: usize },

    #[error("singular value sigma_{index} = {value:.3e} below rank threshold; inverse undefined")]
    RankDeficient { index: usize, value: f64 },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e} exceeds {tol:.3e}")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    #[error("eigenvalue gap is not positive: delta_gap = {gap:.3e}")]
    ZeroGap { gap: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
