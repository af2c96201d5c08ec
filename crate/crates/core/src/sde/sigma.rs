use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Result, SdeError};

/// A coefficient `σ: ℝⁿ → ℝ^{n×d}` with derivative access.
///
/// `jacobian(x)[j]` is `∂σ/∂x_j`; `hessian(x)[j₁ + n·j₂]` is
/// `∂²σ/∂x_{j₁}∂x_{j₂}`.
pub trait Coefficient: Send + Sync {
    fn n(&self) -> usize;
    fn d(&self) -> usize;
    fn eval(&self, x: &[f64]) -> DMatrix<f64>;
    fn jacobian(&self, x: &[f64]) -> Vec<DMatrix<f64>>;
    fn hessian(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    /// `c` with `‖σ(x)‖_F ≤ c(1 + ‖x‖)` for all `x`.
    fn growth_bound(&self) -> Option<f64> {
        None
    }
    /// Global bound on the spectral norm of the Hessian of every entry.
    fn hessian_bound(&self) -> Option<f64> {
        None
    }
    /// `σ(x)·dl`, with `dl` the vectorized driver increment.
    fn apply(&self, x: &[f64], dl: &[f64]) -> Vec<f64> {
        let s = self.eval(x);
        let v = s * nalgebra::DVector::from_column_slice(dl);
        v.as_slice().to_vec()
    }
    fn name(&self) -> String;
}

/// Validated, shareable coefficient.
#[derive(Clone)]
pub struct SigmaMap {
    inner: Arc<dyn Coefficient>,
}

impl fmt::Debug for SigmaMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigmaMap({}, {}×{})", self.inner.name(), self.n(), self.d())
    }
}

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;

impl SigmaMap {
    /// Wraps `c` after checking its Jacobian against central differences at
    /// 20 random points and spot-checking any growth bound at 100 points.
    pub fn new(c: impl Coefficient + 'static) -> Result<Self> {
        let s = Self { inner: Arc::new(c) };
        s.check_jacobian()?;
        s.check_growth()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn d(&self) -> usize {
        self.inner.d()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        self.inner.eval(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        self.inner.jacobian(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        self.inner.hessian(x)
    }

    pub fn growth_bound(&self) -> Option<f64> {
        self.inner.growth_bound()
    }

    pub fn hessian_bound(&self) -> Option<f64> {
        self.inner.hessian_bound()
    }

    pub fn apply(&self, x: &[f64], dl: &[f64]) -> Vec<f64> {
        self.inner.apply(x, dl)
    }

    pub fn name(&self) -> String {
        self.inner.name()
    }

    fn check_jacobian(&self) -> Result<()> {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5167_3a11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let jac = self.jacobian(&x);
            if jac.len() != n {
                return Err(SdeError::InvalidCoefficient(format!("jacobian has {} slices, expected {n}", jac.len())));
            }
            let scale = self.eval(&x).amax().max(1.0);
            for (j, analytic) in jac.iter().enumerate() {
                let mut up = x.clone();
                let mut down = x.clone();
                up[j] += FD_STEP;
                down[j] -= FD_STEP;
                let fd = (self.eval(&up) - self.eval(&down)) / (2.0 * FD_STEP);
                let err = (&fd - analytic).amax();
                if err > FD_TOL * analytic.amax().max(scale) {
                    return Err(SdeError::InvalidCoefficient(format!(
                        "∂σ/∂x_{j} of {} disagrees with finite differences by {err:e} at {x:?}",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_growth(&self) -> Result<()> {
        let Some(c) = self.growth_bound() else {
            return Ok(());
        };
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6a09_e667);
        for _ in 0..100 {
            let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let radius = 10f64.powf(rng.random_range(-3.0..6.0));
            let x: Vec<f64> = dir.iter().map(|v| v / norm * radius).collect();
            let s = self.eval(&x).norm();
            if s > c * (1.0 + radius) * (1.0 + 1e-9) {
                return Err(SdeError::InvalidCoefficient(format!(
                    "‖σ(x)‖ = {s:e} exceeds the declared growth bound at ‖x‖ = {radius:e}"
                )));
            }
        }
        Ok(())
    }

    /// `σ ≡ m`.
    pub fn constant(m: DMatrix<f64>) -> Result<Self> {
        Self::new(Affine {
            base: m.clone(),
            slopes: vec![DMatrix::zeros(m.nrows(), m.ncols()); m.nrows()],
            label: "constant".into(),
        })
    }

    /// `σ ≡ Id_n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut s = Affine::constant(DMatrix::identity(n, n));
        s.label = "identity".into();
        Self::new(s)
    }

    /// `σ(x) = base + Σ_j x_j slopes[j]`.
    pub fn affine(base: DMatrix<f64>, slopes: Vec<DMatrix<f64>>) -> Result<Self> {
        if slopes.len() != base.nrows() || slopes.iter().any(|s| s.shape() != base.shape()) {
            return Err(SdeError::InvalidCoefficient("affine σ needs one n×d slope per coordinate".into()));
        }
        Self::new(Affine {
            base,
            slopes,
            label: "affine".into(),
        })
    }

    /// Scalar `σ(x) = x`.
    pub fn linear_scalar() -> Result<Self> {
        Self::affine(DMatrix::zeros(1, 1), vec![DMatrix::from_element(1, 1, 1.0)])
    }

    /// Scalar `σ(x) = a + b·sin(x)`.
    pub fn sin_shift(a: f64, b: f64) -> Result<Self> {
        Self::new(SinShift { a, b })
    }

    /// `σ(x) = diag(base_i + amp_i·sin x_i)`.
    pub fn diag_sin(base: Vec<f64>, amp: Vec<f64>) -> Result<Self> {
        if base.len() != amp.len() || base.is_empty() {
            return Err(SdeError::InvalidCoefficient("diag σ needs equally many bases and amplitudes".into()));
        }
        Self::new(DiagSin { base, amp })
    }

    /// Bilinear coefficient of the left (`dX = X₋ dL`) or right
    /// (`dY = dL Y₋`) stochastic exponential of a `d×d` driver.
    pub fn exponential(d: usize, side: super::Side) -> Result<Self> {
        Self::new(Bilinear { d, side })
    }

    pub fn poly_trig(family: PolyTrig) -> Result<Self> {
        family.check()?;
        Self::new(family)
    }

    /// Arbitrary coefficient from closures.
    pub fn from_fns<E, J>(n: usize, d: usize, name: impl Into<String>, eval: E, jacobian: J) -> Result<Self>
    where
        E: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        J: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self::new(Closure {
            n,
            d,
            name: name.into(),
            eval: Box::new(eval),
            jacobian: Box::new(jacobian),
            hessian: None,
            growth: None,
            hessian_bound: None,
        })
    }

    /// As [`SigmaMap::from_fns`] with second derivatives and bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fns_full<E, J, H>(
        n: usize,
        d: usize,
        name: impl Into<String>,
        eval: E,
        jacobian: J,
        hessian: H,
        growth: Option<f64>,
        hessian_bound: Option<f64>,
    ) -> Result<Self>
    where
        E: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        J: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
        H: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self::new(Closure {
            n,
            d,
            name: name.into(),
            eval: Box::new(eval),
            jacobian: Box::new(jacobian),
            hessian: Some(Box::new(hessian)),
            growth,
            hessian_bound,
        })
    }
}

struct Affine {
    base: DMatrix<f64>,
    slopes: Vec<DMatrix<f64>>,
    label: String,
}

impl Affine {
    fn constant(m: DMatrix<f64>) -> Self {
        Affine {
            slopes: vec![DMatrix::zeros(m.nrows(), m.ncols()); m.nrows()],
            base: m,
            label: "constant".into(),
        }
    }
}

impl Coefficient for Affine {
    fn n(&self) -> usize {
        self.base.nrows()
    }
    fn d(&self) -> usize {
        self.base.ncols()
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (s, xj) in self.slopes.iter().zip(x) {
            if *xj != 0.0 {
                m += s * *xj;
            }
        }
        m
    }
    fn jacobian(&self, _x: &[f64]) -> Vec<DMatrix<f64>> {
        self.slopes.clone()
    }
    fn hessian(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.n();
        Some(vec![DMatrix::zeros(n, self.d()); n * n])
    }
    fn growth_bound(&self) -> Option<f64> {
        let slope = self.slopes.iter().map(|s| s.norm() * s.norm()).sum::<f64>().sqrt();
        Some(self.base.norm().max(slope))
    }
    fn hessian_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

struct SinShift {
    a: f64,
    b: f64,
}

impl Coefficient for SinShift {
    fn n(&self) -> usize {
        1
    }
    fn d(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a + self.b * x[0].sin())
    }
    fn jacobian(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(1, 1, self.b * x[0].cos())]
    }
    fn hessian(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::from_element(1, 1, -self.b * x[0].sin())])
    }
    fn growth_bound(&self) -> Option<f64> {
        Some(self.a.abs() + self.b.abs())
    }
    fn hessian_bound(&self) -> Option<f64> {
        Some(self.b.abs())
    }
    fn apply(&self, x: &[f64], dl: &[f64]) -> Vec<f64> {
        vec![(self.a + self.b * x[0].sin()) * dl[0]]
    }
    fn name(&self) -> String {
        format!("{} + {}·sin(x)", self.a, self.b)
    }
}

struct DiagSin {
    base: Vec<f64>,
    amp: Vec<f64>,
}

impl Coefficient for DiagSin {
    fn n(&self) -> usize {
        self.base.len()
    }
    fn d(&self) -> usize {
        self.base.len()
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, k| if i == k { self.base[i] + self.amp[i] * x[i].sin() } else { 0.0 })
    }
    fn jacobian(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let n = self.n();
        (0..n)
            .map(|j| DMatrix::from_fn(n, n, |i, k| if i == j && k == j { self.amp[j] * x[j].cos() } else { 0.0 }))
            .collect()
    }
    fn hessian(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.n();
        let mut h = vec![DMatrix::zeros(n, n); n * n];
        for j in 0..n {
            h[j + n * j][(j, j)] = -self.amp[j] * x[j].sin();
        }
        Some(h)
    }
    fn growth_bound(&self) -> Option<f64> {
        Some(self.base.iter().zip(&self.amp).map(|(b, a)| (b.abs() + a.abs()).powi(2)).sum::<f64>().sqrt())
    }
    fn hessian_bound(&self) -> Option<f64> {
        Some(self.amp.iter().fold(0.0, |m, a| m.max(a.abs())))
    }
    fn apply(&self, x: &[f64], dl: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| (self.base[i] + self.amp[i] * x[i].sin()) * dl[i]).collect()
    }
    fn name(&self) -> String {
        format!("diag(base {:?} + amp {:?}·sin x)", self.base, self.amp)
    }
}

struct Bilinear {
    d: usize,
    side: super::Side,
}

impl Coefficient for Bilinear {
    fn n(&self) -> usize {
        self.d * self.d
    }
    fn d(&self) -> usize {
        self.d * self.d
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let m = DMatrix::from_column_slice(d, d, x);
        let id = DMatrix::<f64>::identity(d, d);
        match self.side {
            super::Side::Left => id.kronecker(&m),
            super::Side::Right => m.transpose().kronecker(&id),
        }
    }
    fn jacobian(&self, _x: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.d;
        (0..d * d)
            .map(|j| {
                let mut e = vec![0.0; d * d];
                e[j] = 1.0;
                self.eval(&e)
            })
            .collect()
    }
    fn hessian(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.n();
        Some(vec![DMatrix::zeros(n, n); n * n])
    }
    fn growth_bound(&self) -> Option<f64> {
        Some((self.d as f64).sqrt())
    }
    fn hessian_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn apply(&self, x: &[f64], dl: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        // left: X·ΔL, right: ΔL·Y; sums run over the shared index in the same order
        for c in 0..d {
            for r in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    s += match self.side {
                        super::Side::Left => x[r + j * d] * dl[j + c * d],
                        super::Side::Right => dl[r + j * d] * x[j + c * d],
                    };
                }
                out[r + c * d] = s;
            }
        }
        out
    }
    fn name(&self) -> String {
        match self.side {
            super::Side::Left => format!("left exponential ({0}×{0})", self.d),
            super::Side::Right => format!("right exponential ({0}×{0})", self.d),
        }
    }
}

/// `σ_{ik}(x) = c_{ik} + Σ_j (a_{jik} x_j + s_{jik} sin x_j + k_{jik} cos x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTrig {
    pub constant: DMatrix<f64>,
    pub linear: Vec<DMatrix<f64>>,
    pub sine: Vec<DMatrix<f64>>,
    pub cosine: Vec<DMatrix<f64>>,
}

impl PolyTrig {
    fn check(&self) -> Result<()> {
        let n = self.constant.nrows();
        let ok = [&self.linear, &self.sine, &self.cosine]
            .iter()
            .all(|v| v.len() == n && v.iter().all(|m| m.shape() == self.constant.shape()));
        if ok {
            Ok(())
        } else {
            Err(SdeError::InvalidCoefficient("poly-trig σ needs one n×d coefficient matrix per coordinate".into()))
        }
    }
}

impl Coefficient for PolyTrig {
    fn n(&self) -> usize {
        self.constant.nrows()
    }
    fn d(&self) -> usize {
        self.constant.ncols()
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (j, &xj) in x.iter().enumerate() {
            m += &self.linear[j] * xj + &self.sine[j] * xj.sin() + &self.cosine[j] * xj.cos();
        }
        m
    }
    fn jacobian(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        x.iter()
            .enumerate()
            .map(|(j, &xj)| &self.linear[j] + &self.sine[j] * xj.cos() - &self.cosine[j] * xj.sin())
            .collect()
    }
    fn hessian(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.n();
        let mut h = vec![DMatrix::zeros(n, self.d()); n * n];
        for (j, &xj) in x.iter().enumerate() {
            h[j + n * j] = -(&self.sine[j] * xj.sin()) - &self.cosine[j] * xj.cos();
        }
        Some(h)
    }
    fn growth_bound(&self) -> Option<f64> {
        let trig: f64 = self.sine.iter().chain(&self.cosine).map(|m| m.norm()).sum();
        let lin = self.linear.iter().map(|m| m.norm()).sum::<f64>();
        Some((self.constant.norm() + trig).max(lin))
    }
    fn hessian_bound(&self) -> Option<f64> {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..self.d() {
                let entry = (0..n)
                    .map(|j| self.sine[j][(i, k)].abs() + self.cosine[j][(i, k)].abs())
                    .fold(0.0, f64::max);
                worst = worst.max(entry);
            }
        }
        Some(worst)
    }
    fn name(&self) -> String {
        "poly-trig".into()
    }
}

type MatFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type MatsFn = Box<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

struct Closure {
    n: usize,
    d: usize,
    name: String,
    eval: MatFn,
    jacobian: MatsFn,
    hessian: Option<MatsFn>,
    growth: Option<f64>,
    hessian_bound: Option<f64>,
}

impl Coefficient for Closure {
    fn n(&self) -> usize {
        self.n
    }
    fn d(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        (self.eval)(x)
    }
    fn jacobian(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        (self.jacobian)(x)
    }
    fn hessian(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        self.hessian.as_ref().map(|h| h(x))
    }
    fn growth_bound(&self) -> Option<f64> {
        self.growth
    }
    fn hessian_bound(&self) -> Option<f64> {
        self.hessian_bound
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_passes_its_own_checks() {
        SigmaMap::identity(3).unwrap();
        SigmaMap::linear_scalar().unwrap();
        SigmaMap::sin_shift(2.0, 1.0).unwrap();
        SigmaMap::diag_sin(vec![1.0, 2.0], vec![1.0, 0.5]).unwrap();
        SigmaMap::exponential(2, super::super::Side::Left).unwrap();
        SigmaMap::exponential(3, super::super::Side::Right).unwrap();
        let z = || DMatrix::zeros(2, 1);
        SigmaMap::poly_trig(PolyTrig {
            constant: DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
            linear: vec![DMatrix::from_column_slice(2, 1, &[0.1, 0.0]), z()],
            sine: vec![z(), DMatrix::from_column_slice(2, 1, &[0.3, -0.2])],
            cosine: vec![DMatrix::from_column_slice(2, 1, &[0.0, 0.4]), z()],
        })
        .unwrap();
    }

    #[test]
    fn wrong_jacobian_is_rejected() {
        let r = SigmaMap::from_fns(
            1,
            1,
            "x²",
            |x| DMatrix::from_element(1, 1, x[0] * x[0]),
            |x| vec![DMatrix::from_element(1, 1, x[0])],
        );
        assert!(matches!(r, Err(SdeError::InvalidCoefficient(_))));
    }

    #[test]
    fn false_growth_bound_is_rejected() {
        let r = SigmaMap::from_fns_full(
            1,
            1,
            "x",
            |x| DMatrix::from_element(1, 1, x[0]),
            |_| vec![DMatrix::from_element(1, 1, 1.0)],
            |_| vec![DMatrix::zeros(1, 1)],
            Some(0.5),
            Some(0.0),
        );
        assert!(matches!(r, Err(SdeError::InvalidCoefficient(_))));
    }

    #[test]
    fn bilinear_apply_matches_kronecker() {
        let s = SigmaMap::exponential(2, super::super::Side::Right).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let dl = [0.5, -1.0, 0.25, 2.0];
        let via_matrix = s.eval(&x) * nalgebra::DVector::from_column_slice(&dl);
        assert_eq!(s.apply(&x, &dl), via_matrix.as_slice());
    }
}
