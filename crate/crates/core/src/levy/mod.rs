//! Analytic description of Lévy processes: characteristic triplets, Lévy
//! measure families with closed-form tails and moments, scaling functions,
//! and the short-time behaviour they imply.

mod measure;
mod predict;
mod scaling;
mod triplet;

pub use measure::{JumpLaw, LevyMeasure, MomentDomain, MomentIntegral, Side, TabulatedDensity};
pub use predict::{predict_short_time, PredictionRule, ShortTimePrediction, ShortTimeVerdict};
pub use scaling::{ScalingFunction, SlowlyVarying};
pub use triplet::{CharacteristicTriplet, PathClass};

use thiserror::Error;

use crate::quad::QuadError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{function} is undefined at t = {t}")]
    Domain { function: &'static str, t: f64 },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("no decision rule for {0}")]
    UnsupportedPrediction(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

pub type Result<T> = std::result::Result<T, LevyError>;

/// Evaluates the characteristic exponent ψ(z) of `triplet` (truncation
/// `‖s‖ ≤ 1`).
pub fn characteristic_exponent(
    triplet: &CharacteristicTriplet,
    z: &[f64],
) -> Result<nalgebra::Complex<f64>> {
    triplet.characteristic_exponent(z)
}

/// Tail mass of `measure` beyond `x` on the given side.
pub fn tail_function(measure: &LevyMeasure, x: f64, side: Side) -> Result<f64> {
    measure.tail(x, side)
}

/// Decides finiteness of `∫ |x|^r ν(dx)` over `domain` and evaluates it.
pub fn moment_integral(measure: &LevyMeasure, r: f64, domain: MomentDomain) -> Result<MomentIntegral> {
    measure.moment_integral(r, domain)
}

pub fn classify_paths(triplet: &CharacteristicTriplet) -> Result<PathClass> {
    triplet.classify_paths()
}

/// Blumenthal–Getoor index, analytic per family.
pub fn blumenthal_getoor_index(measure: &LevyMeasure) -> Result<f64> {
    measure.blumenthal_getoor_index()
}

/// Evaluates `f(t)`.
pub fn scaling_eval(f: &ScalingFunction, t: f64) -> Result<f64> {
    f.eval(t)
}
