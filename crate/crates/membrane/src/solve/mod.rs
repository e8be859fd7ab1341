//! Deterministic hitting-distribution solvers.
//!
//! `one_d` holds the exact piecewise-linear solvers on the circle, `two_d`
//! the finite-difference Laplace solver on the 2-torus, and `band` the
//! banded/bordered direct linear solver backing it.

pub mod band;
pub mod one_d;
pub mod two_d;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("scene dimension does not match this solver")]
    DimensionMismatch,
    #[error("singular linear system")]
    SingularSystem,
    #[error("start lies inside the target")]
    StartInsideTarget,
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("linear solve failure: {0}")]
    LinearSolveFailure(String),
}

impl From<SolveError> for crate::predictor::PredictError {
    fn from(e: SolveError) -> Self {
        crate::predictor::PredictError::OracleFailure(e.to_string())
    }
}
