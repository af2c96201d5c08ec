//! Jump-adapted solutions of `dX = σ(X₋) dL` and pathwise stochastic
//! calculus on path skeletons.

mod integrals;
mod sigma;
mod solve;

pub use integrals::{
    integration_by_parts_residual, ito_jump_residual, matrix_bracket, realized_covariation, recover_driver,
    stochastic_integral, JumpResidual,
};
pub use sigma::{Coefficient, PolyTrig, SigmaMap};
pub use solve::{solve_ensemble, solve_sde, stochastic_exponential, write_solutions_csv, SolutionPath, Substeps};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::PathError;

/// Which side a matrix-valued integrator multiplies from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state became non-finite at t = {time:e}")]
    NonFinite { time: f64 },
    #[error("σ(X₋) is singular or ill-conditioned (condition ≈ {condition:e}) at t = {time:e}")]
    IllConditioned { time: f64, condition: f64 },
    #[error("coefficient {0} provides no second derivatives")]
    MissingHessian(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Path(#[from] PathError),
}

pub type Result<T> = std::result::Result<T, SdeError>;
