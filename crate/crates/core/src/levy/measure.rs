use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::{gamma, gamma_li};

use super::{LevyError, Result};
use crate::quad::{integrate, integrate_to_infinity, QuadOptions};
use crate::rng::open01;

/// Which half-line a tail or moment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Positive,
    Negative,
    Both,
}

/// Integration domain of [`LevyMeasure::moment_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentDomain {
    /// `[−1, 1]` (the unit ball in several dimensions).
    Symmetric,
    /// `[0, 1]`.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentIntegral {
    pub finite: bool,
    pub value: f64,
}

/// Jump size distribution of a finite-activity measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum JumpLaw {
    /// Point mass, in any dimension.
    Dirac { at: Vec<f64> },
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl JumpLaw {
    pub fn dim(&self) -> usize {
        match self {
            JumpLaw::Dirac { at } => at.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Dirac { at } if at.is_empty() || at.iter().any(|v| !v.is_finite()) => Err(
                LevyError::InvalidParameter("Dirac jump must be a finite, non-empty vector".into()),
            ),
            JumpLaw::Uniform { low, high } if !(low < high) || !low.is_finite() || !high.is_finite() => {
                Err(LevyError::InvalidParameter(format!(
                    "uniform jump law needs low < high, got [{low}, {high}]"
                )))
            }
            JumpLaw::Normal { mean, sd } if !(*sd > 0.0) || !mean.is_finite() || !sd.is_finite() => {
                Err(LevyError::InvalidParameter(format!("normal jump law needs sd > 0, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    /// Draws one jump into `out` (length `dim()`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            JumpLaw::Dirac { at } => out.copy_from_slice(at),
            JumpLaw::Uniform { low, high } => out[0] = low + (high - low) * rng.random::<f64>(),
            JumpLaw::Normal { mean, sd } => out[0] = mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    fn char_fn(&self, z: &[f64]) -> Complex<f64> {
        match self {
            JumpLaw::Dirac { at } => {
                let phase: f64 = at.iter().zip(z).map(|(a, b)| a * b).sum();
                Complex::new(0.0, phase).exp()
            }
            JumpLaw::Uniform { low, high } => {
                let u = z[0];
                let width = high - low;
                if (u * width).abs() < 1e-8 {
                    return Complex::new(1.0, 0.5 * u * (low + high));
                }
                let num = Complex::new(0.0, u * high).exp() - Complex::new(0.0, u * low).exp();
                num / Complex::new(0.0, u * width)
            }
            JumpLaw::Normal { mean, sd } => {
                let u = z[0];
                Complex::new(-0.5 * u * u * sd * sd, u * mean).exp()
            }
        }
    }

    /// `E[|J|^r 1{lo < |J| ≤ hi}]` restricted to `side`.
    fn partial_moment(&self, r: f64, lo: f64, hi: f64, side: Side) -> Result<f64> {
        match self {
            JumpLaw::Dirac { at } => {
                let s = if at.len() == 1 {
                    let v = at[0];
                    let on_side = match side {
                        Side::Positive => v > 0.0,
                        Side::Negative => v < 0.0,
                        Side::Both => true,
                    };
                    if !on_side {
                        return Ok(0.0);
                    }
                    v.abs()
                } else {
                    if side != Side::Both {
                        return Err(LevyError::InvalidParameter(
                            "one-sided tails are only defined in dimension one".into(),
                        ));
                    }
                    at.iter().map(|v| v * v).sum::<f64>().sqrt()
                };
                Ok(if s > lo && s <= hi { s.powf(r) } else { 0.0 })
            }
            JumpLaw::Uniform { low, high } => {
                let width = high - low;
                let piece = |a: f64, b: f64| -> f64 {
                    if b > a {
                        (b.powf(r + 1.0) - a.powf(r + 1.0)) / ((r + 1.0) * width)
                    } else {
                        0.0
                    }
                };
                let pos = piece(lo.max(*low), hi.min(*high));
                let neg = piece(lo.max(-high), hi.min(-low));
                Ok(match side {
                    Side::Positive => pos,
                    Side::Negative => neg,
                    Side::Both => pos + neg,
                })
            }
            JumpLaw::Normal { mean, sd } => {
                let dist = Normal::new(*mean, *sd).expect("validated normal law");
                let piece = |sign: f64| -> Result<f64> {
                    if r == 0.0 {
                        // mass of {sign * x ∈ (lo, hi]}
                        let (a, b) = if sign > 0.0 { (lo, hi) } else { (-hi, -lo) };
                        return Ok((dist.cdf(b) - dist.cdf(a)).max(0.0));
                    }
                    let g = |s: f64| s.powf(r) * dist.pdf(sign * s);
                    let opts = QuadOptions::default();
                    let v = if hi.is_infinite() {
                        integrate_to_infinity(g, lo, opts)?.value
                    } else {
                        integrate(g, lo, hi, opts)?.value
                    };
                    Ok(v)
                };
                Ok(match side {
                    Side::Positive => piece(1.0)?,
                    Side::Negative => piece(-1.0)?,
                    Side::Both => piece(1.0)? + piece(-1.0)?,
                })
            }
        }
    }
}

/// Lévy density tabulated on a grid in `(0, 1]`, separately for positive and
/// negative jumps, linearly interpolated between nodes and extended towards
/// zero by the power law `d(g₀)·(x/g₀)^{−κ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub grid: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    /// κ of the small-x extrapolation; required for anything touching `(0, g₀)`.
    pub small_x_exponent: Option<f64>,
}

impl TabulatedDensity {
    pub fn new(
        grid: Vec<f64>,
        positive: Vec<f64>,
        negative: Vec<f64>,
        small_x_exponent: Option<f64>,
    ) -> Result<Self> {
        let t = Self {
            grid,
            positive,
            negative,
            small_x_exponent,
        };
        t.validate()?;
        Ok(t)
    }

    /// Samples `density` (applied to both sides) on `grid`.
    pub fn from_fn(
        grid: Vec<f64>,
        density: impl Fn(f64) -> f64,
        small_x_exponent: Option<f64>,
    ) -> Result<Self> {
        let values: Vec<f64> = grid.iter().map(|&x| density(x)).collect();
        Self::new(grid, values.clone(), values, small_x_exponent)
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.len() < 2 || self.positive.len() != g.len() || self.negative.len() != g.len() {
            return Err(LevyError::InvalidParameter(
                "tabulated density needs ≥ 2 nodes and matching value arrays".into(),
            ));
        }
        if !(g[0] > 0.0) || g.windows(2).any(|w| !(w[0] < w[1])) || *g.last().unwrap() > 1.0 {
            return Err(LevyError::InvalidParameter(
                "tabulated grid must be strictly increasing within (0, 1]".into(),
            ));
        }
        if self.positive.iter().chain(&self.negative).any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(LevyError::InvalidParameter("tabulated density values must be finite and ≥ 0".into()));
        }
        if let Some(k) = self.small_x_exponent {
            if !(k < 3.0) || !k.is_finite() {
                return Err(LevyError::InvalidParameter(format!(
                    "small-x exponent {k} violates ∫ min(x², 1) ν(dx) < ∞ (needs κ < 3)"
                )));
            }
        }
        Ok(())
    }

    fn values(&self, side: Side) -> &[f64] {
        match side {
            Side::Negative => &self.negative,
            _ => &self.positive,
        }
    }

    fn density_at(&self, x: f64, side: Side) -> f64 {
        let g = &self.grid;
        let d = self.values(side);
        if x < g[0] {
            return match self.small_x_exponent {
                Some(k) => d[0] * (x / g[0]).powf(-k),
                None => f64::NAN,
            };
        }
        if x > *g.last().unwrap() {
            return 0.0;
        }
        let i = g.partition_point(|&v| v <= x).saturating_sub(1).min(g.len() - 2);
        let w = (x - g[i]) / (g[i + 1] - g[i]);
        d[i] + w * (d[i + 1] - d[i])
    }

    fn exponent(&self) -> Result<f64> {
        self.small_x_exponent.ok_or_else(|| {
            LevyError::Configuration(
                "tabulated density has no small-x power-law exponent; set it explicitly".into(),
            )
        })
    }

    /// `∫_{lo<x≤hi} x^r d_side(x) dx` for one side.
    fn one_side_moment(&self, r: f64, lo: f64, hi: f64, side: Side) -> Result<f64> {
        let g = &self.grid;
        let g0 = g[0];
        let mut total = 0.0;
        if lo < g0 && hi > lo {
            let kappa = self.exponent()?;
            let coeff = self.values(side)[0] * g0.powf(kappa);
            let b = hi.min(g0);
            let e = r - kappa + 1.0;
            if coeff > 0.0 {
                total += if lo == 0.0 {
                    if e <= 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    coeff * b.powf(e) / e
                } else if e == 0.0 {
                    coeff * (b / lo).ln()
                } else {
                    coeff * (b.powf(e) - lo.powf(e)) / e
                };
            }
        }
        let a = lo.max(g0);
        let b = hi.min(*g.last().unwrap());
        if b > a {
            let mut nodes = vec![a];
            nodes.extend(g.iter().copied().filter(|&x| x > a && x < b));
            nodes.push(b);
            let h = |x: f64| x.powf(r) * self.density_at(x, side);
            total += nodes
                .windows(2)
                .map(|w| 0.5 * (w[1] - w[0]) * (h(w[0]) + h(w[1])))
                .sum::<f64>();
        }
        Ok(total)
    }
}

/// Parametric Lévy measure families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LevyMeasure {
    /// `rate` times the law of the jumps.
    FiniteActivity { rate: f64, law: JumpLaw },
    /// Density `c₊ x^{−1−α}` on `(0, ∞)` and `c₋ |x|^{−1−α}` on `(−∞, 0)`.
    StableDensity { alpha: f64, c_plus: f64, c_minus: f64 },
    /// Density `e^{−|x|}` on `[−1, 1]`.
    TruncatedExponential,
    Tabulated(TabulatedDensity),
}

impl LevyMeasure {
    pub fn zero(dim: usize) -> Self {
        LevyMeasure::FiniteActivity {
            rate: 0.0,
            law: JumpLaw::Dirac { at: vec![0.0; dim] },
        }
    }

    pub fn finite_activity(rate: f64, law: JumpLaw) -> Result<Self> {
        let m = LevyMeasure::FiniteActivity { rate, law };
        m.validate()?;
        Ok(m)
    }

    pub fn stable(alpha: f64, c_plus: f64, c_minus: f64) -> Result<Self> {
        let m = LevyMeasure::StableDensity { alpha, c_plus, c_minus };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        match self {
            LevyMeasure::FiniteActivity { law, .. } => law.dim(),
            _ => 1,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LevyMeasure::FiniteActivity { rate, .. } if *rate == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::FiniteActivity { rate, law } => {
                if !(*rate >= 0.0) || !rate.is_finite() {
                    return Err(LevyError::InvalidParameter(format!("jump rate must be ≥ 0, got {rate}")));
                }
                law.validate()
            }
            LevyMeasure::StableDensity { alpha, c_plus, c_minus } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(LevyError::InvalidParameter(format!("stable index must lie in (0, 2), got {alpha}")));
                }
                if !(*c_plus >= 0.0 && *c_minus >= 0.0) || !(c_plus + c_minus > 0.0) {
                    return Err(LevyError::InvalidParameter(
                        "stable density needs c₊, c₋ ≥ 0 with c₊ + c₋ > 0".into(),
                    ));
                }
                Ok(())
            }
            LevyMeasure::TruncatedExponential => Ok(()),
            LevyMeasure::Tabulated(t) => t.validate(),
        }
    }

    /// `∫_{lo < |x| ≤ hi} |x|^r ν(dx)` on `side`; `+∞` when divergent.
    pub fn side_moment(&self, r: f64, lo: f64, hi: f64, side: Side) -> Result<f64> {
        if !(lo >= 0.0) || !(hi >= lo) {
            return Err(LevyError::InvalidParameter(format!("bad moment range ({lo}, {hi}]")));
        }
        if hi == lo {
            return Ok(0.0);
        }
        if side == Side::Both && self.dim() == 1 {
            return Ok(self.side_moment(r, lo, hi, Side::Positive)?
                + self.side_moment(r, lo, hi, Side::Negative)?);
        }
        match self {
            LevyMeasure::FiniteActivity { rate, law } => {
                if *rate == 0.0 {
                    return Ok(0.0);
                }
                Ok(rate * law.partial_moment(r, lo, hi, side)?)
            }
            LevyMeasure::StableDensity { alpha, c_plus, c_minus } => {
                let c = if side == Side::Positive { *c_plus } else { *c_minus };
                if c == 0.0 {
                    return Ok(0.0);
                }
                let e = r - alpha;
                if (lo == 0.0 && e <= 0.0) || (hi.is_infinite() && e >= 0.0) {
                    return Ok(f64::INFINITY);
                }
                Ok(if e == 0.0 {
                    c * (hi / lo).ln()
                } else if hi.is_infinite() {
                    -c * lo.powf(e) / e
                } else {
                    c * (hi.powf(e) - lo.powf(e)) / e
                })
            }
            LevyMeasure::TruncatedExponential => {
                let b = hi.min(1.0);
                if b <= lo {
                    return Ok(0.0);
                }
                let lower = |x: f64| if x > 0.0 { gamma_li(r + 1.0, x) } else { 0.0 };
                Ok(lower(b) - lower(lo))
            }
            LevyMeasure::Tabulated(t) => t.one_side_moment(r, lo, hi, side),
        }
    }

    /// Tail function Π̄(x): mass of `{x' > x}`, `{x' < −x}` or `{|x'| > x}`.
    pub fn tail(&self, x: f64, side: Side) -> Result<f64> {
        if !(x > 0.0) || x.is_nan() {
            return Err(LevyError::InvalidParameter(format!("tail argument must be > 0, got {x}")));
        }
        if let LevyMeasure::StableDensity { alpha, c_plus, c_minus } = self {
            let one = |c: f64| c * x.powf(-alpha) / alpha;
            return Ok(match side {
                Side::Positive => one(*c_plus),
                Side::Negative => one(*c_minus),
                Side::Both => one(*c_plus) + one(*c_minus),
            });
        }
        self.side_moment(0.0, x, f64::INFINITY, side)
    }

    pub fn moment_integral(&self, r: f64, domain: MomentDomain) -> Result<MomentIntegral> {
        if !(r > 0.0) {
            return Err(LevyError::InvalidParameter(format!("moment exponent must be > 0, got {r}")));
        }
        let side = match domain {
            MomentDomain::Symmetric => Side::Both,
            MomentDomain::Positive => Side::Positive,
        };
        let value = self.side_moment(r, 0.0, 1.0, side)?;
        Ok(MomentIntegral {
            finite: value.is_finite(),
            value,
        })
    }

    /// `∫_{lo < ‖x‖ ≤ hi} x ν(dx)`; `+∞` entries when not absolutely integrable.
    pub fn signed_moment(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        match self {
            LevyMeasure::FiniteActivity { rate, law: JumpLaw::Dirac { at } } if at.len() > 1 => {
                let norm = at.iter().map(|v| v * v).sum::<f64>().sqrt();
                let inside = norm > lo && norm <= hi;
                Ok(at.iter().map(|v| if inside { rate * v } else { 0.0 }).collect())
            }
            _ => {
                let abs = self.side_moment(1.0, lo, hi, Side::Both)?;
                if !abs.is_finite() {
                    return Ok(vec![f64::INFINITY]);
                }
                let pos = self.side_moment(1.0, lo, hi, Side::Positive)?;
                let neg = self.side_moment(1.0, lo, hi, Side::Negative)?;
                Ok(vec![pos - neg])
            }
        }
    }

    /// Blumenthal–Getoor index using the closed form of each family.
    pub fn blumenthal_getoor_index(&self) -> Result<f64> {
        match self {
            LevyMeasure::FiniteActivity { .. } | LevyMeasure::TruncatedExponential => Ok(0.0),
            LevyMeasure::StableDensity { alpha, .. } => Ok(*alpha),
            LevyMeasure::Tabulated(t) => {
                let k = t.exponent()?;
                let touches_zero = t.positive[0] > 0.0 || t.negative[0] > 0.0;
                Ok(if touches_zero { (k - 1.0).clamp(0.0, 2.0) } else { 0.0 })
            }
        }
    }

    /// Blumenthal–Getoor index by bisection on the finiteness of
    /// `∫_{[−1,1]} |x|^r ν(dx)` over `r ∈ [1e−6, 2]`, to absolute tolerance `tol`.
    pub fn blumenthal_getoor_bisection(&self, tol: f64) -> Result<f64> {
        let finite = |r: f64| -> Result<bool> { Ok(self.moment_integral(r, MomentDomain::Symmetric)?.finite) };
        let (mut lo, mut hi) = (1e-6, 2.0);
        if finite(lo)? {
            return Ok(0.0);
        }
        if !finite(hi)? {
            return Ok(2.0);
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if finite(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `∫ (e^{i⟨z,s⟩} − 1 − i⟨z,s⟩ 1{‖s‖ ≤ 1}) ν(ds)`.
    pub fn exponent_integral(&self, z: &[f64]) -> Result<Complex<f64>> {
        match self {
            LevyMeasure::FiniteActivity { rate, law } => {
                if *rate == 0.0 {
                    return Ok(Complex::new(0.0, 0.0));
                }
                let m = self.signed_moment(0.0, 1.0)?;
                let drift: f64 = m.iter().zip(z).map(|(a, b)| a * b).sum();
                Ok(*rate * (law.char_fn(z) - 1.0) - Complex::new(0.0, drift))
            }
            LevyMeasure::StableDensity { alpha, c_plus, c_minus } => {
                let u = z[0];
                Ok(*c_plus * stable_half_line(*alpha, u) + *c_minus * stable_half_line(*alpha, -u))
            }
            LevyMeasure::TruncatedExponential => {
                let u = z[0];
                let w = Complex::new(-1.0, u);
                let cos_part = ((w.exp() - 1.0) / w).re;
                Ok(Complex::new(2.0 * (cos_part - (1.0 - (-1.0f64).exp())), 0.0))
            }
            LevyMeasure::Tabulated(t) => tabulated_exponent(t, z[0]),
        }
    }

    /// Draws a jump with `‖x‖ > eps` from ν restricted to that set and
    /// normalised. Fails if that set carries no mass.
    pub fn sample_beyond<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let total = self.tail(eps, Side::Both)?;
        if !(total > 0.0) || !total.is_finite() {
            return Err(LevyError::Configuration(format!(
                "cannot sample jumps beyond {eps}: tail mass is {total}"
            )));
        }
        if let LevyMeasure::FiniteActivity { law, .. } = self {
            for _ in 0..1_000_000 {
                law.sample_into(rng, out);
                if out.iter().map(|v| v * v).sum::<f64>().sqrt() > eps {
                    return Ok(());
                }
            }
            return Err(LevyError::Configuration(format!(
                "rejection sampling beyond {eps} did not accept within 10⁶ draws"
            )));
        }
        let plus = self.tail(eps, Side::Positive)?;
        let sign = if rng.random::<f64>() * total < plus { 1.0 } else { -1.0 };
        let side = if sign > 0.0 { Side::Positive } else { Side::Negative };
        let u = open01(rng);
        let magnitude = match self {
            LevyMeasure::StableDensity { alpha, .. } => eps * u.powf(-1.0 / alpha),
            LevyMeasure::TruncatedExponential => {
                let (a, b) = ((-eps).exp(), (-1.0f64).exp());
                -(a - u * (a - b)).ln()
            }
            LevyMeasure::Tabulated(t) => {
                let target = u * self.tail(eps, side)?;
                let (mut lo, mut hi) = (eps, *t.grid.last().unwrap());
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.tail(mid, side)? > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            LevyMeasure::FiniteActivity { .. } => unreachable!(),
        };
        out[0] = sign * magnitude;
        Ok(())
    }
}

/// `∫_0^∞ (e^{iux} − 1 − iux 1{x ≤ 1}) x^{−1−α} dx` in closed form.
fn stable_half_line(alpha: f64, u: f64) -> Complex<f64> {
    if u == 0.0 {
        return Complex::new(0.0, 0.0);
    }
    if alpha == 1.0 {
        // −π|u|/2 + i u (1 − γ_E − ln|u|)
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        return Complex::new(-FRAC_PI_2 * u.abs(), u * (1.0 - EULER_GAMMA - u.abs().ln()));
    }
    // Γ(−α)(−iu)^α + iu/(α − 1)
    let power = Complex::from_polar(u.abs().powf(alpha), -u.signum() * PI * alpha / 2.0);
    gamma(-alpha) * power + Complex::new(0.0, u / (alpha - 1.0))
}

/// `cos y − 1` without cancellation.
pub(crate) fn cos_m1(y: f64) -> f64 {
    let h = (0.5 * y).sin();
    -2.0 * h * h
}

/// `sin y − y` without cancellation.
pub(crate) fn sin_m_id(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let y2 = y * y;
        -y * y2 / 6.0 * (1.0 - y2 / 20.0 * (1.0 - y2 / 42.0 * (1.0 - y2 / 72.0)))
    } else {
        y.sin() - y
    }
}

fn tabulated_exponent(t: &TabulatedDensity, u: f64) -> Result<Complex<f64>> {
    let opts = QuadOptions::default();
    let g = &t.grid;
    let (mut re, mut im) = (0.0, 0.0);
    let asym = |x: f64| t.density_at(x, Side::Positive) - t.density_at(x, Side::Negative);
    let sym = |x: f64| t.density_at(x, Side::Positive) + t.density_at(x, Side::Negative);
    for w in g.windows(2) {
        re += integrate(|x| cos_m1(u * x) * sym(x), w[0], w[1], opts)?.value;
        im += integrate(|x| sin_m_id(u * x) * asym(x), w[0], w[1], opts)?.value;
    }
    let touches_zero = t.positive[0] > 0.0 || t.negative[0] > 0.0;
    if touches_zero {
        // x = g₀ u^m with m = 2/(3 − κ) makes the integrand regular at 0.
        let kappa = t.exponent()?;
        let m = 2.0 / (3.0 - kappa);
        let g0 = g[0];
        let jac = |s: f64| g0 * m * s.powf(m - 1.0);
        re += integrate(
            |s| {
                let x = g0 * s.powf(m);
                cos_m1(u * x) * sym(x) * jac(s)
            },
            0.0,
            1.0,
            opts,
        )?
        .value;
        im += integrate(
            |s| {
                let x = g0 * s.powf(m);
                sin_m_id(u * x) * asym(x) * jac(s)
            },
            0.0,
            1.0,
            opts,
        )?
        .value;
    }
    Ok(Complex::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_square() -> LevyMeasure {
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        LevyMeasure::Tabulated(TabulatedDensity::from_fn(grid, |x| x.powi(-2), Some(2.0)).unwrap())
    }

    #[test]
    fn point_mass_tail() {
        let m = LevyMeasure::finite_activity(1.0, JumpLaw::Dirac { at: vec![1.0] }).unwrap();
        assert_eq!(m.tail(0.5, Side::Positive).unwrap(), 1.0);
        assert_eq!(m.tail(1.5, Side::Positive).unwrap(), 0.0);
        assert_eq!(m.tail(0.5, Side::Negative).unwrap(), 0.0);
    }

    #[test]
    fn truncated_exponential_tail_closed_form() {
        let v = LevyMeasure::TruncatedExponential.tail(0.5, Side::Both).unwrap();
        let expected = 2.0 * ((-0.5f64).exp() - (-1.0f64).exp());
        assert!((v - expected).abs() < 1e-14, "{v} vs {expected}");
        assert_eq!(LevyMeasure::TruncatedExponential.tail(1.0, Side::Both).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_stable_tails_agree() {
        let m = LevyMeasure::stable(1.3, 0.7, 0.7).unwrap();
        for x in [0.01, 0.5, 3.0] {
            assert_eq!(m.tail(x, Side::Positive).unwrap(), m.tail(x, Side::Negative).unwrap());
        }
    }

    #[test]
    fn nonpositive_tail_argument_rejected() {
        assert!(LevyMeasure::TruncatedExponential.tail(0.0, Side::Both).is_err());
        assert!(LevyMeasure::TruncatedExponential.tail(-1.0, Side::Both).is_err());
    }

    #[test]
    fn stable_moment_finite_iff_r_exceeds_alpha() {
        let m = LevyMeasure::stable(1.2, 1.0, 1.0).unwrap();
        let r = 1.0 / 0.7;
        let mi = m.moment_integral(r, MomentDomain::Symmetric).unwrap();
        assert!(mi.finite);
        // 2 ∫_0^1 x^{r-1-α} dx = 2/(r-α)
        assert!((mi.value - 2.0 / (r - 1.2)).abs() < 1e-12);
        assert!(!m.moment_integral(1.2, MomentDomain::Symmetric).unwrap().finite);
        assert!(!m.moment_integral(1.0, MomentDomain::Symmetric).unwrap().finite);
    }

    #[test]
    fn finite_activity_moments_always_finite() {
        let m = LevyMeasure::finite_activity(3.0, JumpLaw::Normal { mean: 0.2, sd: 2.0 }).unwrap();
        for r in [1e-4, 0.3, 1.0, 1.9] {
            assert!(m.moment_integral(r, MomentDomain::Symmetric).unwrap().finite);
        }
    }

    #[test]
    fn tabulated_inverse_square_moment_threshold() {
        let m = inv_square();
        for p in [0.6, 0.8, 0.95] {
            assert!(m.moment_integral(1.0 / p, MomentDomain::Symmetric).unwrap().finite, "p={p}");
        }
        for p in [1.0, 1.2, 2.0] {
            assert!(!m.moment_integral(1.0 / p, MomentDomain::Symmetric).unwrap().finite, "p={p}");
        }
    }

    #[test]
    fn tabulated_without_exponent_is_a_configuration_error() {
        let grid = vec![0.1, 0.5, 1.0];
        let t = TabulatedDensity::from_fn(grid, |x| 1.0 / x, None).unwrap();
        let m = LevyMeasure::Tabulated(t);
        assert!(matches!(
            m.moment_integral(1.0, MomentDomain::Symmetric),
            Err(LevyError::Configuration(_))
        ));
        // Away from zero the table alone suffices.
        assert!(m.tail(0.2, Side::Both).is_ok());
    }

    #[test]
    fn bg_index_closed_forms_and_bisection_agree() {
        for alpha in [0.5, 1.0, 1.5, 1.9] {
            let m = LevyMeasure::stable(alpha, 1.0, 0.5).unwrap();
            assert_eq!(m.blumenthal_getoor_index().unwrap(), alpha);
            assert!((m.blumenthal_getoor_bisection(1e-3).unwrap() - alpha).abs() <= 1e-3);
        }
        let fa = LevyMeasure::finite_activity(2.0, JumpLaw::Uniform { low: -1.0, high: 1.0 }).unwrap();
        assert_eq!(fa.blumenthal_getoor_index().unwrap(), 0.0);
        assert!(fa.blumenthal_getoor_bisection(1e-3).unwrap() < 1e-3);
        assert!(LevyMeasure::TruncatedExponential.blumenthal_getoor_bisection(1e-3).unwrap() < 1e-3);
        assert!((inv_square().blumenthal_getoor_bisection(1e-3).unwrap() - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn invalid_families_rejected() {
        assert!(LevyMeasure::stable(2.0, 1.0, 1.0).is_err());
        assert!(LevyMeasure::stable(0.0, 1.0, 1.0).is_err());
        assert!(LevyMeasure::stable(1.0, 0.0, 0.0).is_err());
        assert!(LevyMeasure::finite_activity(-1.0, JumpLaw::Dirac { at: vec![1.0] }).is_err());
        assert!(TabulatedDensity::new(vec![0.5, 0.2], vec![1.0; 2], vec![1.0; 2], None).is_err());
        assert!(TabulatedDensity::new(vec![0.1, 1.0], vec![1.0; 2], vec![1.0; 2], Some(3.5)).is_err());
    }

    #[test]
    fn conditional_sampling_respects_truncation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut out = [0.0];
        for m in [
            LevyMeasure::stable(0.8, 1.0, 2.0).unwrap(),
            LevyMeasure::TruncatedExponential,
            inv_square(),
            LevyMeasure::finite_activity(1.0, JumpLaw::Uniform { low: -1.0, high: 1.0 }).unwrap(),
        ] {
            for _ in 0..500 {
                m.sample_beyond(0.1, &mut rng, &mut out).unwrap();
                assert!(out[0].abs() > 0.1, "{m:?} gave {}", out[0]);
            }
        }
        assert!(LevyMeasure::TruncatedExponential.sample_beyond(1.0, &mut rng, &mut out).is_err());
    }
}
