use num_complex::Complex64;
use thiserror::Error;

use crate::modelspec::ExprError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid taboo set: {0}")]
    Taboo(String),
    #[error("start state {start} is not strictly between the barriers")]
    StartInTaboo { start: usize },
    #[error("model invariant violated: {0}")]
    Invariant(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Error)]
pub enum NumericError {
    /// The continued fraction did not reach the requested tolerance.
    #[error("continued fraction not converged at depth {depth}: error estimate {err_est:e}")]
    NonConvergence {
        value: Complex64,
        depth: usize,
        err_est: f64,
    },
    #[error("non-finite transform value at s = {s}")]
    NonFinite { s: Complex64 },
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("search assumption violated: {0}")]
    NonMonotone(String),
    #[error("{0}")]
    Simulation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
