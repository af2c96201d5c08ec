//! Driver paths on geometric short-time grids with exact jump ledgers.

mod driver;
mod grid;
mod skeleton;

pub use driver::{
    sample_brownian, sample_compound_poisson, sample_driver, sample_driver_shaped, sample_ensemble,
    sample_ensemble_shaped, sample_stable, sample_truncated_infinite_activity, shot_noise_stable,
    stable_density_constants, stable_scale_from_density, stable_variate, DriverSpec, Truncation,
};
pub use grid::{make_grid, TimeGrid};
pub use skeleton::{
    assemble_matrix_driver, merge_times, write_paths_csv, ContinuousKind, PathSkeleton, SkeletonParts,
    PATH_CSV_HEADER,
};

use thiserror::Error;

use crate::levy::LevyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

pub type Result<T> = std::result::Result<T, PathError>;
