use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use super::{LevyError, Result};

/// Slowly varying factor `h` (or `ℓ`), evaluated at `u = 1/t`.
#[derive(Clone)]
pub enum SlowlyVarying {
    Constant(f64),
    /// `ln(e + u)^power`.
    LogPower { power: f64 },
    Custom {
        name: String,
        h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl SlowlyVarying {
    pub fn custom(name: impl Into<String>, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SlowlyVarying::Custom {
            name: name.into(),
            h: Arc::new(h),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            SlowlyVarying::Constant(c) => *c,
            SlowlyVarying::LogPower { power } => (std::f64::consts::E + u).ln().powf(*power),
            SlowlyVarying::Custom { h, .. } => h(u),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SlowlyVarying::Constant(c) => format!("{c}"),
            SlowlyVarying::LogPower { power } => format!("ln(e+u)^{power}"),
            SlowlyVarying::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for SlowlyVarying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Normalising function `f` with `f(0) = 0`.
#[derive(Clone, Debug)]
pub enum ScalingFunction {
    /// `t^p`.
    Power(f64),
    /// `√(2t ln ln(1/t))`.
    Khintchine,
    /// `√(t ln ln(1/t)) / h(1/t)`.
    GeneralLil(SlowlyVarying),
    /// `t^a ℓ(1/t)`.
    RegularlyVarying { index: f64, slowly: SlowlyVarying },
    /// `factor · inner(t)`.
    Scaled { factor: f64, inner: Box<ScalingFunction> },
}

const LIL_LIMIT: f64 = 0.367_879_441_171_442_33; // e^{-1}

impl ScalingFunction {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(LevyError::InvalidParameter(format!("power must be > 0, got {p}")));
        }
        Ok(ScalingFunction::Power(p))
    }

    pub fn scaled(self, factor: f64) -> Self {
        ScalingFunction::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    /// Exclusive upper end of the domain.
    pub fn domain_end(&self) -> f64 {
        match self {
            ScalingFunction::Khintchine | ScalingFunction::GeneralLil(_) => LIL_LIMIT,
            ScalingFunction::Scaled { inner, .. } => inner.domain_end(),
            _ => f64::INFINITY,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let name = self.name();
        if t == 0.0 {
            return Ok(0.0);
        }
        if !(t > 0.0) || t >= self.domain_end() {
            return Err(LevyError::Domain { function: name, t });
        }
        let lil = |t: f64| t * (1.0 / t).ln().ln();
        let v = match self {
            ScalingFunction::Power(p) => t.powf(*p),
            ScalingFunction::Khintchine => (2.0 * lil(t)).sqrt(),
            ScalingFunction::GeneralLil(h) => lil(t).sqrt() / h.eval(1.0 / t),
            ScalingFunction::RegularlyVarying { index, slowly } => t.powf(*index) * slowly.eval(1.0 / t),
            ScalingFunction::Scaled { factor, inner } => factor * inner.eval(t)?,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(LevyError::Domain { function: name, t });
        }
        Ok(v)
    }

    /// `Some(p)` if `f` is a plain power law (possibly scaled), with the factor.
    pub fn as_power(&self) -> Option<(f64, f64)> {
        match self {
            ScalingFunction::Power(p) => Some((*p, 1.0)),
            ScalingFunction::Scaled { factor, inner } => inner.as_power().map(|(p, c)| (p, c * factor)),
            _ => None,
        }
    }

    /// Regular-variation index at zero.
    pub fn index(&self) -> f64 {
        match self {
            ScalingFunction::Power(p) => *p,
            ScalingFunction::Khintchine | ScalingFunction::GeneralLil(_) => 0.5,
            ScalingFunction::RegularlyVarying { index, .. } => *index,
            ScalingFunction::Scaled { inner, .. } => inner.index(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ScalingFunction::Power(_) => "power",
            ScalingFunction::Khintchine => "khintchine",
            ScalingFunction::GeneralLil(_) => "general_lil",
            ScalingFunction::RegularlyVarying { .. } => "regularly_varying",
            ScalingFunction::Scaled { inner, .. } => inner.name(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ScalingFunction::Power(p) => format!("t^{p}"),
            ScalingFunction::Khintchine => "sqrt(2 t ln ln(1/t))".into(),
            ScalingFunction::GeneralLil(h) => format!("sqrt(t ln ln(1/t)) / h(1/t), h = {}", h.describe()),
            ScalingFunction::RegularlyVarying { index, slowly } => {
                format!("t^{index} l(1/t), l = {}", slowly.describe())
            }
            ScalingFunction::Scaled { factor, inner } => format!("{factor} * {}", inner.describe()),
        }
    }
}

impl Serialize for ScalingFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn khintchine_closed_form() {
        let t = (-std::f64::consts::E.powi(2)).exp();
        let v = ScalingFunction::Khintchine.eval(t).unwrap();
        assert!((v - 2.0 * t.sqrt()).abs() < 1e-15 * v.max(1.0) + 1e-18);
    }

    #[test]
    fn power_and_origin() {
        assert_eq!(ScalingFunction::Power(1.0).eval(0.25).unwrap(), 0.25);
        assert_eq!(ScalingFunction::Khintchine.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn lil_domain() {
        assert!(matches!(ScalingFunction::Khintchine.eval(0.9), Err(LevyError::Domain { .. })));
        assert!(ScalingFunction::Khintchine.eval(LIL_LIMIT).is_err());
        assert!(ScalingFunction::GeneralLil(SlowlyVarying::Constant(1.0)).eval(0.5).is_err());
        assert!(ScalingFunction::Khintchine.eval(0.3).is_ok());
        assert!(ScalingFunction::power(-1.0).is_err());
    }

    #[test]
    fn general_lil_with_constant_two_over_root_two() {
        let h = SlowlyVarying::Constant(std::f64::consts::FRAC_1_SQRT_2);
        let g = ScalingFunction::GeneralLil(h);
        for t in [1e-3, 1e-8] {
            let a = g.eval(t).unwrap();
            let b = ScalingFunction::Khintchine.eval(t).unwrap();
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_power_unwraps() {
        let f = ScalingFunction::Power(0.5).scaled(3.0);
        assert_eq!(f.as_power(), Some((0.5, 3.0)));
        assert!((f.eval(0.04).unwrap() - 0.6).abs() < 1e-15);
    }
}
