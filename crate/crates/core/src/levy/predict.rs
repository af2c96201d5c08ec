use serde::Serialize;

use super::measure::MomentDomain;
use super::scaling::ScalingFunction;
use super::triplet::{CharacteristicTriplet, PathClass};
use super::{LevyError, Result};

/// Predicted behaviour of `L_t / f(t)` as `t ↓ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ShortTimeVerdict {
    FiniteLimit { limit: Vec<f64> },
    ZeroLimit,
    DivergesInNorm,
    /// Oscillates with `limsup ‖L_t‖ / f(t) = limsup` almost surely.
    OscillatesLil { limsup: f64, description: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionRule {
    /// `p < 1/2`: Khintchine's LIL bounds every Lévy process.
    BelowHalf,
    /// Gaussian part with Khintchine normalisation.
    GaussianLil,
    /// Gaussian part with `p = 1/2`.
    GaussianAtHalf,
    /// Gaussian part with `p > 1/2`.
    GaussianAboveHalf,
    /// No Gaussian part, Khintchine normalisation.
    NoGaussianLil,
    /// `p = 1/2` without Gaussian part, via the moment test slightly above 1/2.
    BoundaryHalf,
    /// `1/2 < p`: finiteness of `∫ |x|^{1/p} ν(dx)` over `[−1, 1]`.
    MomentCriterion,
    /// `p = 1` with bounded variation: the drift is the limit.
    BoundedVariationDrift,
    /// `p ≥ 1` with unbounded variation.
    UnboundedVariation,
    /// `p > 1` with bounded variation and a non-zero drift.
    DriftDominates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortTimePrediction {
    #[serde(flatten)]
    pub verdict: ShortTimeVerdict,
    pub rule: PredictionRule,
}

impl ShortTimePrediction {
    fn new(verdict: ShortTimeVerdict, rule: PredictionRule) -> Self {
        Self { verdict, rule }
    }
}

const HALF_OFFSET: f64 = 1e-3;

/// Short-time behaviour of `L_t / f(t)` for power-law and Khintchine `f`.
pub fn predict_short_time(triplet: &CharacteristicTriplet, f: &ScalingFunction) -> Result<ShortTimePrediction> {
    use PredictionRule as R;
    use ShortTimeVerdict as V;

    if let ScalingFunction::Scaled { factor, inner } = f {
        let mut inner = predict_short_time(triplet, inner)?;
        match &mut inner.verdict {
            V::FiniteLimit { limit } => limit.iter_mut().for_each(|v| *v /= factor),
            V::OscillatesLil { limsup, .. } => *limsup /= factor,
            _ => {}
        }
        return Ok(inner);
    }
    let gaussian = triplet.has_gaussian();
    let zero_criterion = |p: f64| -> Result<bool> {
        Ok(triplet.measure.is_zero() || triplet.measure.moment_integral(1.0 / p, MomentDomain::Symmetric)?.finite)
    };

    let p = match f {
        ScalingFunction::Power(p) => *p,
        ScalingFunction::Khintchine => {
            return Ok(if gaussian {
                let limsup = triplet.gaussian_spectral_radius().sqrt();
                ShortTimePrediction::new(
                    V::OscillatesLil {
                        limsup,
                        description: format!("limsup ‖L_t‖/f(t) = {limsup} (sqrt of the largest Gaussian eigenvalue)"),
                    },
                    R::GaussianLil,
                )
            } else {
                ShortTimePrediction::new(V::ZeroLimit, R::NoGaussianLil)
            });
        }
        other => {
            return Err(LevyError::UnsupportedPrediction(other.describe()));
        }
    };

    if p < 0.5 {
        return Ok(ShortTimePrediction::new(V::ZeroLimit, R::BelowHalf));
    }
    if gaussian {
        return Ok(if p == 0.5 {
            ShortTimePrediction::new(
                V::OscillatesLil {
                    limsup: f64::INFINITY,
                    description: "unbounded oscillation at sqrt(t) scale".into(),
                },
                R::GaussianAtHalf,
            )
        } else {
            ShortTimePrediction::new(V::DivergesInNorm, R::GaussianAboveHalf)
        });
    }
    if p == 0.5 {
        return if zero_criterion(0.5 + HALF_OFFSET)? {
            Ok(ShortTimePrediction::new(V::ZeroLimit, R::BoundaryHalf))
        } else {
            Err(LevyError::UnsupportedPrediction(
                "p = 1/2 without Gaussian part and ∫|x|^r ν(dx) = ∞ for r slightly below 2".into(),
            ))
        };
    }
    if p < 1.0 {
        return Ok(if zero_criterion(p)? {
            ShortTimePrediction::new(V::ZeroLimit, R::MomentCriterion)
        } else {
            ShortTimePrediction::new(V::DivergesInNorm, R::MomentCriterion)
        });
    }
    match triplet.classify_paths()? {
        PathClass::UnboundedVariation => Ok(ShortTimePrediction::new(V::DivergesInNorm, R::UnboundedVariation)),
        PathClass::BvWithDrift { drift } => Ok(if p == 1.0 {
            ShortTimePrediction::new(V::FiniteLimit { limit: drift }, R::BoundedVariationDrift)
        } else {
            ShortTimePrediction::new(V::DivergesInNorm, R::DriftDominates)
        }),
        PathClass::BvNoDrift => Ok(if p == 1.0 {
            ShortTimePrediction::new(V::ZeroLimit, R::BoundedVariationDrift)
        } else if zero_criterion(p)? {
            ShortTimePrediction::new(V::ZeroLimit, R::MomentCriterion)
        } else {
            ShortTimePrediction::new(V::DivergesInNorm, R::MomentCriterion)
        }),
        PathClass::HasGaussian => unreachable!("Gaussian case handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpLaw, LevyMeasure};
    use nalgebra::DMatrix;

    fn brownian() -> CharacteristicTriplet {
        CharacteristicTriplet::brownian(DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn cp_drift(drift: f64) -> CharacteristicTriplet {
        let m = LevyMeasure::finite_activity(1.0, JumpLaw::Normal { mean: 0.0, sd: 1.0 }).unwrap();
        CharacteristicTriplet::from_true_drift(DMatrix::zeros(1, 1), m, vec![drift]).unwrap()
    }

    fn stable(alpha: f64) -> CharacteristicTriplet {
        let m = LevyMeasure::stable(alpha, 1.0, 1.0).unwrap();
        CharacteristicTriplet::new(DMatrix::zeros(1, 1), m, vec![0.0]).unwrap()
    }

    #[test]
    fn brownian_below_half_is_zero() {
        let p = predict_short_time(&brownian(), &ScalingFunction::Power(0.4)).unwrap();
        assert_eq!(p.verdict, ShortTimeVerdict::ZeroLimit);
        assert_eq!(p.rule, PredictionRule::BelowHalf);
    }

    #[test]
    fn bv_drift_limit() {
        let p = predict_short_time(&cp_drift(0.3), &ScalingFunction::Power(1.0)).unwrap();
        match p.verdict {
            ShortTimeVerdict::FiniteLimit { limit } => assert!((limit[0] - 0.3).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
        let p = predict_short_time(&cp_drift(0.3), &ScalingFunction::Power(1.5)).unwrap();
        assert_eq!(p.verdict, ShortTimeVerdict::DivergesInNorm);
    }

    #[test]
    fn brownian_khintchine_limsup_one() {
        let p = predict_short_time(&brownian(), &ScalingFunction::Khintchine).unwrap();
        match p.verdict {
            ShortTimeVerdict::OscillatesLil { limsup, .. } => assert!((limsup - 1.0).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn stable_moment_criterion() {
        let z = predict_short_time(&stable(1.2), &ScalingFunction::Power(0.7)).unwrap();
        assert_eq!(z.verdict, ShortTimeVerdict::ZeroLimit);
        let d = predict_short_time(&stable(1.5), &ScalingFunction::Power(0.7)).unwrap();
        assert_eq!(d.verdict, ShortTimeVerdict::DivergesInNorm);
        let u = predict_short_time(&stable(1.5), &ScalingFunction::Power(1.0)).unwrap();
        assert_eq!(u.verdict, ShortTimeVerdict::DivergesInNorm);
        let z = predict_short_time(&stable(0.5), &ScalingFunction::Power(1.5)).unwrap();
        assert_eq!(z.verdict, ShortTimeVerdict::ZeroLimit);
    }

    #[test]
    fn general_lil_unsupported() {
        let f = ScalingFunction::GeneralLil(crate::levy::SlowlyVarying::Constant(1.0));
        assert!(matches!(
            predict_short_time(&brownian(), &f),
            Err(LevyError::UnsupportedPrediction(_))
        ));
    }

    #[test]
    fn boundary_half() {
        let z = predict_short_time(&stable(1.5), &ScalingFunction::Power(0.5)).unwrap();
        assert_eq!(z.rule, PredictionRule::BoundaryHalf);
        assert!(predict_short_time(&stable(1.9995), &ScalingFunction::Power(0.5)).is_err());
    }

    #[test]
    fn scaled_divides_limit() {
        let f = ScalingFunction::Power(1.0).scaled(2.0);
        match predict_short_time(&cp_drift(0.3), &f).unwrap().verdict {
            ShortTimeVerdict::FiniteLimit { limit } => assert!((limit[0] - 0.15).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
    }
}
