use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Result, SdeError, SigmaMap, Side};
use crate::par;
use crate::paths::{write_paths_csv, ContinuousKind, PathSkeleton, SkeletonParts};

/// How each stored interval of the driver is subdivided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Substeps {
    /// Split every interval so no substep exceeds `10⁻³·t_max` or `10⁻²·t`
    /// at the interval end `t`. Drivers with a random continuous part are
    /// never split.
    #[default]
    Auto,
    Fixed(usize),
}

impl From<usize> for Substeps {
    fn from(m: usize) -> Self {
        Substeps::Fixed(m)
    }
}

/// A solution path together with its driver and coefficient.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub path: PathSkeleton,
    pub driver: Arc<PathSkeleton>,
    pub sigma: SigmaMap,
    singular_at: Option<f64>,
}

impl SolutionPath {
    /// False once some jump had `det(Id + ΔL) = 0` (stochastic exponentials only).
    pub fn invertible(&self) -> bool {
        self.singular_at.is_none()
    }

    /// Time of the first singular jump, if any.
    pub fn singular_at(&self) -> Option<f64> {
        self.singular_at
    }

    pub fn x0(&self) -> &[f64] {
        self.path.origin()
    }
}

fn substep_count(rule: Substeps, driver: &PathSkeleton, i: usize) -> Result<usize> {
    let kind = driver.continuous();
    match rule {
        Substeps::Fixed(0) => Err(SdeError::InvalidParameter("substeps must be positive".into())),
        Substeps::Fixed(m) if m > 1 && kind == ContinuousKind::Stochastic => Err(SdeError::InvalidParameter(
            "a random continuous part cannot be subdivided; refine the driver grid instead".into(),
        )),
        Substeps::Fixed(m) => Ok(m),
        Substeps::Auto => {
            if kind != ContinuousKind::Linear {
                return Ok(1);
            }
            let t_max = *driver.times().last().unwrap();
            let t = driver.times()[i];
            let dt = t - driver.previous_time(i);
            let h = (1e-3 * t_max).min(1e-2 * t);
            Ok(((dt / h).ceil() as usize).max(1))
        }
    }
}

/// Jump-adapted Euler solution of `dX = σ(X₋) dL`, `X₀ = x0`.
///
/// Jumps are applied exactly as `X_τ = X_{τ−} + σ(X_{τ−})ΔL_τ`; between
/// stored times the continuous increment of the driver is split evenly
/// over the substeps.
pub fn solve_sde(sigma: &SigmaMap, x0: &[f64], driver: &PathSkeleton, substeps: Substeps) -> Result<SolutionPath> {
    let n = sigma.n();
    let d = sigma.d();
    if x0.len() != n {
        return Err(SdeError::DimensionMismatch(format!("x0 has {} entries, σ expects {n}", x0.len())));
    }
    if driver.dim() != d {
        return Err(SdeError::DimensionMismatch(format!(
            "driver has dimension {}, σ expects {d}",
            driver.dim()
        )));
    }
    let len = driver.len();
    let mut values = Vec::with_capacity(len * n);
    let mut pre_jump = Vec::with_capacity(driver.jump_count() * n);
    let mut x = x0.to_vec();
    let mut inc = vec![0.0; d];
    for i in 0..len {
        let t = driver.times()[i];
        let left = driver.left_value(i);
        let prev = driver.previous_value(i);
        if left.iter().zip(prev).any(|(a, b)| a != b) {
            let m = substep_count(substeps, driver, i)?;
            for c in 0..d {
                inc[c] = (left[c] - prev[c]) / m as f64;
            }
            for _ in 0..m {
                let dx = sigma.apply(&x, &inc);
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SdeError::NonFinite { time: t });
            }
        }
        if let Some(j) = driver.jump_slot(i) {
            pre_jump.extend_from_slice(&x);
            let dx = sigma.apply(&x, driver.jump(j));
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SdeError::NonFinite { time: t });
            }
        }
        values.extend_from_slice(&x);
    }
    let path = PathSkeleton::from_parts(SkeletonParts {
        times: driver.times().to_vec(),
        shape: (n, 1),
        origin: x0.to_vec(),
        values,
        grid_indices: driver.grid_indices().to_vec(),
        jump_indices: driver.jump_indices().to_vec(),
        pre_jump,
        seed_id: driver.seed_id(),
        continuous: driver.continuous(),
    })?;
    Ok(SolutionPath {
        path,
        driver: Arc::new(driver.clone()),
        sigma: sigma.clone(),
        singular_at: None,
    })
}

/// Solves every driver of an ensemble, one path per task.
pub fn solve_ensemble(
    sigma: &SigmaMap,
    x0: &[f64],
    drivers: &[PathSkeleton],
    substeps: Substeps,
) -> Result<Vec<SolutionPath>> {
    par::try_map_indexed(drivers.len(), |k| solve_sde(sigma, x0, &drivers[k], substeps))
}

/// Left (`dX = X₋ dL`) or right (`dY = dL Y₋`) stochastic exponential of a
/// square matrix driver, started at the identity. The result keeps the
/// driver's `d×d` shape.
pub fn stochastic_exponential(driver: &PathSkeleton, side: Side) -> Result<SolutionPath> {
    let (r, c) = driver.shape();
    if r != c {
        return Err(SdeError::DimensionMismatch(format!("exponential needs a square driver, got {r}×{c}")));
    }
    let sigma = SigmaMap::exponential(r, side)?;
    let id = DMatrix::<f64>::identity(r, r);
    let mut sol = solve_sde(&sigma, id.as_slice(), driver, Substeps::Auto)?;
    let p = &sol.path;
    sol.path = PathSkeleton::from_parts(SkeletonParts {
        times: p.times().to_vec(),
        shape: (r, r),
        origin: p.origin().to_vec(),
        values: p.values().to_vec(),
        grid_indices: p.grid_indices().to_vec(),
        jump_indices: p.jump_indices().to_vec(),
        pre_jump: (0..p.jump_count()).flat_map(|j| p.pre_jump(j).to_vec()).collect(),
        seed_id: p.seed_id(),
        continuous: p.continuous(),
    })?;
    for j in 0..driver.jump_count() {
        let m = id.clone() + DMatrix::from_column_slice(r, r, driver.jump(j));
        let det = m.clone().lu().determinant();
        if det.abs() <= 1e-12 * m.norm().max(1.0).powi(r as i32) {
            sol.singular_at = Some(driver.jump_time(j));
            break;
        }
    }
    Ok(sol)
}

/// Solutions in the path CSV schema with `kind=solution`.
pub fn write_solutions_csv<W: Write>(out: &mut W, solutions: &[SolutionPath]) -> io::Result<()> {
    let paths: Vec<PathSkeleton> = solutions.iter().map(|s| s.path.clone()).collect();
    write_paths_csv(out, &paths, Some("solution"))
}
