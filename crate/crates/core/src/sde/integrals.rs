use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::{Result, SdeError, SigmaMap, Side, SolutionPath};
use crate::paths::{merge_times, ContinuousKind, PathSkeleton, SkeletonParts};

const CONDITION_LIMIT: f64 = 1e12;

/// Brings two paths onto a common set of stored times.
fn shared<'a>(a: &'a PathSkeleton, b: &'a PathSkeleton) -> Result<(Cow<'a, PathSkeleton>, Cow<'a, PathSkeleton>)> {
    if a.times() == b.times() {
        return Ok((Cow::Borrowed(a), Cow::Borrowed(b)));
    }
    let times = merge_times(a.times(), b.times());
    let align = |p: &'a PathSkeleton| -> Result<Cow<'a, PathSkeleton>> {
        if p.times() == times.as_slice() {
            Ok(Cow::Borrowed(p))
        } else {
            p.align_to(&times)
                .map(Cow::Owned)
                .map_err(|e| SdeError::GridMismatch(e.to_string()))
        }
    };
    Ok((align(a)?, align(b)?))
}

/// Column-major `(r×k)·(k×c)`, summing over the shared index in ascending order.
fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize, out: &mut [f64]) {
    for col in 0..c {
        for row in 0..r {
            let mut s = 0.0;
            for j in 0..k {
                s += a[row + j * r] * b[j + col * k];
            }
            out[row + col * r] = s;
        }
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Accumulates a path from per-interval continuous and jump contributions
/// produced by `step(i) -> (continuous, jump)`.
fn accumulate(
    times: &[f64],
    grid_indices: &[usize],
    jump_indices: Vec<usize>,
    shape: (usize, usize),
    origin: Vec<f64>,
    continuous: ContinuousKind,
    mut step: impl FnMut(usize, bool) -> Result<(Vec<f64>, Option<Vec<f64>>)>,
) -> Result<PathSkeleton> {
    let dim = shape.0 * shape.1;
    let mut acc = origin.clone();
    let mut values = Vec::with_capacity(times.len() * dim);
    let mut pre_jump = Vec::with_capacity(jump_indices.len() * dim);
    let mut slot = 0;
    for i in 0..times.len() {
        let is_jump = jump_indices.get(slot) == Some(&i);
        let (cont, jump) = step(i, is_jump)?;
        for (a, c) in acc.iter_mut().zip(&cont) {
            *a += c;
        }
        if is_jump {
            pre_jump.extend_from_slice(&acc);
            if let Some(jv) = jump {
                for (a, c) in acc.iter_mut().zip(&jv) {
                    *a += c;
                }
            }
            slot += 1;
        }
        values.extend_from_slice(&acc);
    }
    Ok(PathSkeleton::from_parts(SkeletonParts {
        times: times.to_vec(),
        shape,
        origin,
        values,
        grid_indices: grid_indices.to_vec(),
        jump_indices,
        pre_jump,
        seed_id: 0,
        continuous,
    })?)
}

/// Integrand value used on the continuous piece ending at index `i`.
///
/// A random integrand is taken at the left point. A linear one is taken at
/// the right end against a random integrator and at the midpoint against a
/// linear one; together with the bracket convention in
/// [`realized_covariation`] this keeps discrete integration by parts exact.
fn integrand_value(h: &PathSkeleton, against: ContinuousKind, i: usize) -> Cow<'_, [f64]> {
    match (h.continuous(), against) {
        (ContinuousKind::Linear, ContinuousKind::Stochastic) => Cow::Borrowed(h.left_value(i)),
        (ContinuousKind::Linear, ContinuousKind::Linear) => Cow::Owned(
            h.previous_value(i)
                .iter()
                .zip(h.left_value(i))
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        ),
        _ => Cow::Borrowed(h.previous_value(i)),
    }
}

/// Left-point sums `Σ H(t_j−)·ΔX` (left) or `Σ ΔX·H(t_j−)` (right) over the
/// refined grid, with pre-jump integrand values at jump times.
///
/// Left: integrand `n×d`, driver `d×m`. Right: driver `n×d`, integrand
/// `d×m`. The result is `n×m` and starts at zero.
pub fn stochastic_integral(integrand: &PathSkeleton, driver: &PathSkeleton, side: Side) -> Result<PathSkeleton> {
    let (h, x) = shared(integrand, driver)?;
    let (hr, hc) = h.shape();
    let (xr, xc) = x.shape();
    let (r, k, c) = match side {
        Side::Left if hc == xr => (hr, hc, xc),
        Side::Right if xc == hr => (xr, xc, hc),
        _ => {
            return Err(SdeError::DimensionMismatch(format!(
                "cannot multiply integrand {hr}×{hc} and driver {xr}×{xc} on the {side:?}"
            )))
        }
    };
    let mut buf = vec![0.0; r * c];
    let mut product = |hv: &[f64], dx: &[f64]| -> Vec<f64> {
        match side {
            Side::Left => matmul(hv, dx, r, k, c, &mut buf),
            Side::Right => matmul(dx, hv, r, k, c, &mut buf),
        }
        buf.clone()
    };
    let continuous = match (h.continuous(), x.continuous()) {
        (_, ContinuousKind::None) => ContinuousKind::None,
        (ContinuousKind::Stochastic, _) | (_, ContinuousKind::Stochastic) => ContinuousKind::Stochastic,
        _ => ContinuousKind::Linear,
    };
    accumulate(
        x.times(),
        x.grid_indices(),
        x.jump_indices().to_vec(),
        (r, c),
        vec![0.0; r * c],
        continuous,
        |i, is_jump| {
            let cont = product(&integrand_value(&h, x.continuous(), i), &diff(x.left_value(i), x.previous_value(i)));
            let jump = is_jump.then(|| product(h.left_value(i), &diff(x.value(i), x.left_value(i))));
            Ok((cont, jump))
        },
    )
}

/// Realized covariation `Σ ΔX ΔYᵀ` of the vectorized paths over all refined
/// intervals and jumps; entry `(a, b)` pairs component `a` of X with
/// component `b` of Y. Continuous pieces count only when both paths have a
/// random continuous part; linear pieces have zero covariation.
pub fn realized_covariation(x: &PathSkeleton, y: &PathSkeleton) -> Result<PathSkeleton> {
    let (x, y) = shared(x, y)?;
    let (p, q) = (x.dim(), y.dim());
    let outer = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; p * q];
        for (col, bv) in b.iter().enumerate() {
            for (row, av) in a.iter().enumerate() {
                out[row + col * p] = av * bv;
            }
        }
        out
    };
    bracket_with(&x, &y, (p, q), outer)
}

/// Matrix bracket `Σ ΔX ΔY` for `X` of shape `n×d` and `Y` of shape `d×m`,
/// the term appearing in matrix integration by parts.
pub fn matrix_bracket(x: &PathSkeleton, y: &PathSkeleton) -> Result<PathSkeleton> {
    let (x, y) = shared(x, y)?;
    let ((n, d), (d2, m)) = (x.shape(), y.shape());
    if d != d2 {
        return Err(SdeError::DimensionMismatch(format!("bracket of {n}×{d} and {d2}×{m} paths")));
    }
    let prod = |a: &[f64], b: &[f64]| {
        let mut out = vec![0.0; n * m];
        matmul(a, b, n, d, m, &mut out);
        out
    };
    bracket_with(&x, &y, (n, m), prod)
}

fn bracket_with(
    x: &PathSkeleton,
    y: &PathSkeleton,
    shape: (usize, usize),
    combine: impl Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Result<PathSkeleton> {
    let both_random = x.continuous() == ContinuousKind::Stochastic && y.continuous() == ContinuousKind::Stochastic;
    let continuous = if both_random {
        ContinuousKind::Stochastic
    } else {
        ContinuousKind::None
    };
    let zero = vec![0.0; shape.0 * shape.1];
    accumulate(
        x.times(),
        x.grid_indices(),
        union(x.jump_indices(), y.jump_indices()),
        shape,
        vec![0.0; shape.0 * shape.1],
        continuous,
        |i, is_jump| {
            let cont = if both_random {
                combine(
                    &diff(x.left_value(i), x.previous_value(i)),
                    &diff(y.left_value(i), y.previous_value(i)),
                )
            } else {
                zero.clone()
            };
            let jump = is_jump.then(|| {
                combine(
                    &diff(x.value(i), x.left_value(i)),
                    &diff(y.value(i), y.left_value(i)),
                )
            });
            Ok((cont, jump))
        },
    )
}

/// Largest relative residual over stored times of the discrete
/// integration-by-parts identity
/// `X_tY_t − X_0Y_0 = ∫X₋dY + ∫dX Y₋ + [X,Y]_t` for `X: n×d`, `Y: d×m`.
pub fn integration_by_parts_residual(x: &PathSkeleton, y: &PathSkeleton) -> Result<f64> {
    let (x, y) = shared(x, y)?;
    let a = stochastic_integral(&x, &y, Side::Left)?;
    let b = stochastic_integral(&y, &x, Side::Right)?;
    let c = matrix_bracket(&x, &y)?;
    let x0y0 = x.origin_matrix() * y.origin_matrix();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let xy = x.matrix(i) * y.matrix(i);
        let (ai, bi, ci) = (a.matrix(i), b.matrix(i), c.matrix(i));
        let r = (&ai + &bi + &ci - (&xy - &x0y0)).norm();
        let scale = ai.norm() + bi.norm() + ci.norm() + xy.norm() + x0y0.norm();
        if r > 0.0 {
            worst = worst.max(r / scale);
        }
    }
    Ok(worst)
}

fn solve_checked(s: DMatrix<f64>, rhs: &[f64], time: f64) -> Result<Vec<f64>> {
    let qr = s.col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let hi = diag.iter().cloned().fold(0.0, f64::max);
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(SdeError::IllConditioned { time, condition });
    }
    qr.solve(&DVector::from_column_slice(rhs))
        .map(|v| v.as_slice().to_vec())
        .ok_or(SdeError::IllConditioned {
            time,
            condition: f64::INFINITY,
        })
}

/// `L_t = ∫ σ(X₋)⁻¹ dX` by left-point sums, returned in the driver's shape
/// and started at the driver's origin.
pub fn recover_driver(sigma: &SigmaMap, solution: &SolutionPath) -> Result<PathSkeleton> {
    if sigma.n() != sigma.d() {
        return Err(SdeError::DimensionMismatch(format!(
            "recovery needs a square σ, got {}×{}",
            sigma.n(),
            sigma.d()
        )));
    }
    let x = &solution.path;
    let driver = &solution.driver;
    accumulate(
        x.times(),
        x.grid_indices(),
        x.jump_indices().to_vec(),
        driver.shape(),
        driver.origin().to_vec(),
        x.continuous(),
        |i, is_jump| {
            let t = x.times()[i];
            let prev = x.previous_value(i);
            let cont = solve_checked(sigma.eval(prev), &diff(x.left_value(i), prev), t)?;
            let jump = if is_jump {
                let left = x.left_value(i);
                Some(solve_checked(sigma.eval(left), &diff(x.value(i), left), t)?)
            } else {
                None
            };
            Ok((cont, jump))
        },
    )
}

/// Second-order remainder of `σ` across one jump of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpResidual {
    pub time: f64,
    /// `σ(X_τ) − σ(X_{τ−}) − Σ_j ∂σ/∂x_j(X_{τ−}) ΔX_j`.
    pub residual: DMatrix<f64>,
    pub jump_norm: f64,
    /// Largest entry of `|residual|` divided by `‖ΔX‖²`.
    pub ratio: f64,
    /// `½·sup‖∇²σ_{ik}‖` along the jump segment; `ratio ≤ bound` by Taylor.
    pub bound: f64,
}

fn sampled_hessian_bound(sigma: &SigmaMap, a: &[f64], b: &[f64]) -> f64 {
    let n = sigma.n();
    let mut worst: f64 = 0.0;
    for s in 0..=20 {
        let w = s as f64 / 20.0;
        let p: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + w * (v - u)).collect();
        let h = sigma.hessian(&p).unwrap_or_default();
        for row in 0..n {
            for col in 0..sigma.d() {
                let entry = DMatrix::from_fn(n, n, |j1, j2| h[j1 + n * j2][(row, col)]);
                let norm = entry.symmetric_eigenvalues().iter().fold(0.0f64, |m, e| m.max(e.abs()));
                worst = worst.max(norm);
            }
        }
    }
    worst
}

/// Per-jump Taylor remainders of `σ` along a solution.
pub fn ito_jump_residual(sigma: &SigmaMap, solution: &SolutionPath) -> Result<Vec<JumpResidual>> {
    let x = &solution.path;
    if sigma.hessian(x.origin()).is_none() {
        return Err(SdeError::MissingHessian(sigma.name()));
    }
    let mut out = Vec::with_capacity(x.jump_count());
    for j in 0..x.jump_count() {
        let pre = x.pre_jump(j);
        let post = x.value(x.jump_indices()[j]);
        let dx = x.jump(j);
        let mut residual = sigma.eval(post) - sigma.eval(pre);
        for (jac, d) in sigma.jacobian(pre).iter().zip(dx) {
            residual -= jac * *d;
        }
        let jump_norm = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = if jump_norm > 0.0 {
            residual.amax() / (jump_norm * jump_norm)
        } else {
            0.0
        };
        let bound = 0.5 * sigma.hessian_bound().unwrap_or_else(|| sampled_hessian_bound(sigma, pre, post));
        out.push(JumpResidual {
            time: x.jump_time(j),
            residual,
            jump_norm,
            ratio,
            bound,
        });
    }
    Ok(out)
}
