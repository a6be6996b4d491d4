use thiserror::Error;

use crate::problems::ProblemKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("function evaluation returned a non-finite value at coordinate {coord}")]
    NonFiniteEval { coord: usize },

    #[error("{what} did not converge after {iters} iterations")]
    NoConvergence { what: &'static str, iters: usize },

    #[error("nuisance kind {found} does not match problem {expected}")]
    KindMismatch { expected: ProblemKind, found: ProblemKind },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("missing nuisance component `{0}`")]
    MissingComponent(String),

    #[error("iterate diverged at iteration {iter} (norm {norm})")]
    NonFiniteIterate { iter: usize, norm: f64 },

    #[error("{stream} stream exhausted after {consumed} samples")]
    StreamExhausted { stream: &'static str, consumed: usize },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
