use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::measure::{LevyMeasure, MomentDomain};
use super::{LevyError, Result};

/// Characteristic triplet `(A, ν, γ)` under the truncation `1{‖s‖ ≤ 1}`.
///
/// Matrix-valued processes are described by the triplet of their column-wise
/// vectorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTriplet {
    pub gaussian: DMatrix<f64>,
    pub measure: LevyMeasure,
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PathClass {
    /// Bounded variation with non-zero drift `γ₀`.
    BvWithDrift { drift: Vec<f64> },
    BvNoDrift,
    UnboundedVariation,
    HasGaussian,
}

impl PathClass {
    pub fn is_bounded_variation(&self) -> bool {
        matches!(self, PathClass::BvWithDrift { .. } | PathClass::BvNoDrift)
    }
}

impl CharacteristicTriplet {
    pub fn new(gaussian: DMatrix<f64>, measure: LevyMeasure, drift: Vec<f64>) -> Result<Self> {
        let t = Self {
            gaussian,
            measure,
            drift,
        };
        t.validate()?;
        Ok(t)
    }

    /// Brownian motion with covariance `a` per unit time.
    pub fn brownian(a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        Self::new(a, LevyMeasure::zero(d), vec![0.0; d])
    }

    /// Triplet whose path is `drift·t + (jumps of ν)`, with `γ` set from the
    /// true drift `γ₀` by adding back the compensator.
    pub fn from_true_drift(gaussian: DMatrix<f64>, measure: LevyMeasure, true_drift: Vec<f64>) -> Result<Self> {
        let comp = measure.signed_moment(0.0, 1.0)?;
        if comp.iter().any(|c| !c.is_finite()) {
            return Err(LevyError::InvalidParameter(
                "true drift is undefined for a measure of unbounded variation".into(),
            ));
        }
        let drift = if comp.len() == true_drift.len() {
            true_drift.iter().zip(&comp).map(|(g, c)| g + c).collect()
        } else {
            true_drift
        };
        Self::new(gaussian, measure, drift)
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.drift.len();
        if d == 0 {
            return Err(LevyError::InvalidParameter("dimension must be positive".into()));
        }
        if self.gaussian.nrows() != d || self.gaussian.ncols() != d {
            return Err(LevyError::DimensionMismatch {
                expected: d,
                got: self.gaussian.nrows(),
            });
        }
        if !self.measure.is_zero() && self.measure.dim() != d {
            return Err(LevyError::DimensionMismatch {
                expected: d,
                got: self.measure.dim(),
            });
        }
        if self.drift.iter().chain(self.gaussian.iter()).any(|v| !v.is_finite()) {
            return Err(LevyError::InvalidParameter("triplet entries must be finite".into()));
        }
        let a = &self.gaussian;
        if (a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
            return Err(LevyError::InvalidParameter("Gaussian covariance must be symmetric".into()));
        }
        let floor = -1e-12 * a.norm();
        let min_eig = SymmetricEigen::new(a.clone()).eigenvalues.min();
        if min_eig < floor {
            return Err(LevyError::InvalidParameter(format!(
                "Gaussian covariance is not positive semidefinite (eigenvalue {min_eig})"
            )));
        }
        self.measure.validate()
    }

    pub fn has_gaussian(&self) -> bool {
        self.gaussian.iter().any(|v| *v != 0.0)
    }

    /// Largest eigenvalue of `A`.
    pub fn gaussian_spectral_radius(&self) -> f64 {
        SymmetricEigen::new(self.gaussian.clone()).eigenvalues.max().max(0.0)
    }

    pub fn characteristic_exponent(&self, z: &[f64]) -> Result<Complex<f64>> {
        if z.len() != self.dim() {
            return Err(LevyError::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(LevyError::InvalidParameter("z must be finite".into()));
        }
        let zv = nalgebra::DVector::from_column_slice(z);
        let quad = (zv.transpose() * &self.gaussian * &zv)[0];
        let lin: f64 = self.drift.iter().zip(z).map(|(g, v)| g * v).sum();
        let jumps = if self.measure.is_zero() {
            Complex::new(0.0, 0.0)
        } else {
            self.measure.exponent_integral(z)?
        };
        Ok(Complex::new(-0.5 * quad, lin) + jumps)
    }

    /// `γ₀ = γ − ∫_{‖s‖≤1} s ν(ds)`, or `None` when the integral diverges.
    pub fn true_drift(&self) -> Result<Option<Vec<f64>>> {
        let comp = self.measure.signed_moment(0.0, 1.0)?;
        if comp.iter().any(|c| !c.is_finite()) {
            return Ok(None);
        }
        if self.measure.is_zero() {
            return Ok(Some(self.drift.clone()));
        }
        Ok(Some(self.drift.iter().zip(&comp).map(|(g, c)| g - c).collect()))
    }

    pub fn classify_paths(&self) -> Result<PathClass> {
        if self.has_gaussian() {
            return Ok(PathClass::HasGaussian);
        }
        let bv = self.measure.is_zero() || self.measure.moment_integral(1.0, MomentDomain::Symmetric)?.finite;
        if !bv {
            return Ok(PathClass::UnboundedVariation);
        }
        let drift = self.true_drift()?.expect("bounded variation has a true drift");
        let scale = self.drift.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if drift.iter().all(|v| v.abs() <= 1e-12 * scale) {
            Ok(PathClass::BvNoDrift)
        } else {
            Ok(PathClass::BvWithDrift { drift })
        }
    }
}
