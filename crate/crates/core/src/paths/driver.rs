use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::grid::TimeGrid;
use super::skeleton::{merge_times, ContinuousKind, PathSkeleton, SkeletonParts};
use super::{PathError, Result};
use crate::levy::{CharacteristicTriplet, JumpLaw, LevyError, LevyMeasure, Side};
use crate::rng::{open01, RngStream};

const JUMP_PURPOSE: u64 = 1;
const CONTINUOUS_PURPOSE: u64 = 2;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Where small jumps are cut off in a truncated sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Truncation {
    /// Same level `eps` everywhere.
    Fixed { eps: f64 },
    /// On the grid interval ending at `t_k`, cut at `delta · t_k^{1/index}`.
    /// Keeps the unresolved share of the quadratic variation at a fixed
    /// fraction of the typical increment on every scale.
    Relative { delta: f64, index: f64 },
}

impl Truncation {
    fn level(&self, interval_end: f64) -> f64 {
        match self {
            Truncation::Fixed { eps } => *eps,
            Truncation::Relative { delta, index } => delta * interval_end.powf(1.0 / index),
        }
    }
}

/// Recipe for a driver path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverSpec {
    /// Brownian motion with covariance `covariance` per unit time plus `drift·t`.
    Brownian { covariance: DMatrix<f64>, drift: Vec<f64> },
    /// Exact compound Poisson process plus the true drift `drift·t`.
    CompoundPoisson { rate: f64, law: JumpLaw, drift: Vec<f64> },
    /// Strictly α-stable increments (S1 parametrization) plus `drift·t`.
    Stable { alpha: f64, beta: f64, scale: f64, drift: f64 },
    /// Jumps above the truncation level simulated exactly; smaller ones
    /// replaced by their compensator and, if `correction`, a matching
    /// Brownian motion (automatic when `None`).
    Truncated {
        measure: LevyMeasure,
        truncation: Truncation,
        correction: Option<bool>,
        location: Vec<f64>,
    },
    /// `L_t = drift·t`.
    Deterministic { drift: Vec<f64> },
    /// Independent parts added together (equal dimensions).
    Sum { parts: Vec<DriverSpec> },
    /// Independent parts stacked into one vector (or, with a shape, a matrix
    /// in column-major order).
    Stack { parts: Vec<DriverSpec> },
}

#[derive(Debug, Clone)]
struct Jump {
    time: f64,
    delta: Vec<f64>,
}

/// `(c₊, c₋)` of the Lévy density of the S1 law `S_α(scale, β, 0)`.
pub fn stable_density_constants(alpha: f64, beta: f64, scale: f64) -> (f64, f64) {
    let total = if alpha == 1.0 {
        2.0 * scale / PI
    } else {
        scale.powf(alpha) / (-gamma(-alpha) * (FRAC_PI_2 * alpha).cos())
    };
    (0.5 * (1.0 + beta) * total, 0.5 * (1.0 - beta) * total)
}

/// Inverse of [`stable_density_constants`]: `(scale, β)`.
pub fn stable_scale_from_density(alpha: f64, c_plus: f64, c_minus: f64) -> (f64, f64) {
    let total = c_plus + c_minus;
    let beta = (c_plus - c_minus) / total;
    let scale = if alpha == 1.0 {
        total * FRAC_PI_2
    } else {
        (total * -gamma(-alpha) * (FRAC_PI_2 * alpha).cos()).powf(1.0 / alpha)
    };
    (scale, beta)
}

/// One `S_α(1, β, 0)` variate by the Chambers–Mallows–Stuck method.
pub fn stable_variate<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    let w = -open01(rng).ln();
    if alpha == 1.0 {
        let a = FRAC_PI_2 + beta * v;
        return (a * v.tan() - beta * (FRAC_PI_2 * w * v.cos() / a).ln()) / FRAC_PI_2;
    }
    let t = beta * (FRAC_PI_2 * alpha).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(0.5 / alpha);
    let ab = alpha * (v + b);
    s * ab.sin() / v.cos().powf(1.0 / alpha) * ((v - ab).cos() / w).powf((1.0 - alpha) / alpha)
}

fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let floor = -1e-12 * a.norm();
    if eig.eigenvalues.iter().any(|&l| l < floor) || (a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
        return Err(PathError::NotPositiveSemidefinite);
    }
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(eig.eigenvectors * roots)
}

/// Jumps of a Poisson stream with rate `rate` on `(a, b]`.
fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, a: f64, b: f64, out: &mut Vec<f64>) {
    if rate <= 0.0 {
        return;
    }
    let mut t = a;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / rate;
        if t > b {
            break;
        }
        out.push(t);
    }
}

struct TruncationRates {
    drift: Vec<Vec<f64>>,
    sd: Vec<f64>,
}

impl DriverSpec {
    pub fn dim(&self) -> usize {
        match self {
            DriverSpec::Brownian { drift, .. } | DriverSpec::CompoundPoisson { drift, .. } => drift.len(),
            DriverSpec::Deterministic { drift } => drift.len(),
            DriverSpec::Stable { .. } => 1,
            DriverSpec::Truncated { location, .. } => location.len(),
            DriverSpec::Sum { parts } => parts.first().map_or(0, |p| p.dim()),
            DriverSpec::Stack { parts } => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(PathError::InvalidParameter("driver dimension must be positive".into()));
        }
        match self {
            DriverSpec::Brownian { covariance, .. } => {
                if covariance.nrows() != d || covariance.ncols() != d {
                    return Err(PathError::DimensionMismatch {
                        expected: d,
                        got: covariance.nrows(),
                    });
                }
                psd_factor(covariance).map(|_| ())
            }
            DriverSpec::CompoundPoisson { rate, law, .. } => {
                LevyMeasure::finite_activity(*rate, law.clone())?;
                if law.dim() != d {
                    return Err(PathError::DimensionMismatch { expected: d, got: law.dim() });
                }
                Ok(())
            }
            DriverSpec::Stable { alpha, beta, scale, drift } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(PathError::InvalidParameter(format!("stable index must lie in (0, 2), got {alpha}")));
                }
                if !(beta.abs() <= 1.0) || !(*scale > 0.0) || !drift.is_finite() {
                    return Err(PathError::InvalidParameter("stable driver needs |β| ≤ 1 and scale > 0".into()));
                }
                Ok(())
            }
            DriverSpec::Truncated {
                measure,
                truncation,
                correction,
                ..
            } => {
                measure.validate()?;
                if !measure.is_zero() && measure.dim() != d {
                    return Err(PathError::DimensionMismatch {
                        expected: d,
                        got: measure.dim(),
                    });
                }
                let ok = match truncation {
                    Truncation::Fixed { eps } => *eps > 0.0 && eps.is_finite(),
                    Truncation::Relative { delta, index } => *delta > 0.0 && *index > 0.0,
                };
                if !ok {
                    return Err(PathError::InvalidParameter("truncation level must be positive".into()));
                }
                if d > 1 && *correction == Some(true) {
                    return Err(PathError::InvalidParameter(
                        "small-jump Gaussian correction is only available in dimension one".into(),
                    ));
                }
                Ok(())
            }
            DriverSpec::Deterministic { .. } => Ok(()),
            DriverSpec::Sum { parts } => {
                for p in parts {
                    p.validate()?;
                    if p.dim() != d {
                        return Err(PathError::DimensionMismatch { expected: d, got: p.dim() });
                    }
                }
                Ok(())
            }
            DriverSpec::Stack { parts } => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    pub fn continuous_kind(&self) -> ContinuousKind {
        let linear_if = |nonzero: bool| if nonzero { ContinuousKind::Linear } else { ContinuousKind::None };
        match self {
            DriverSpec::Brownian { covariance, drift } => {
                if covariance.iter().any(|v| *v != 0.0) {
                    ContinuousKind::Stochastic
                } else {
                    linear_if(drift.iter().any(|v| *v != 0.0))
                }
            }
            DriverSpec::CompoundPoisson { drift, .. } | DriverSpec::Deterministic { drift } => {
                linear_if(drift.iter().any(|v| *v != 0.0))
            }
            DriverSpec::Stable { .. } => ContinuousKind::Stochastic,
            // Correction on or off, the compensator drift is generically non-zero.
            DriverSpec::Truncated { correction, measure, .. } => {
                if *correction == Some(false) || measure.dim() > 1 {
                    ContinuousKind::Linear
                } else {
                    ContinuousKind::Stochastic
                }
            }
            DriverSpec::Sum { parts } | DriverSpec::Stack { parts } => parts
                .iter()
                .fold(ContinuousKind::None, |k, p| k.combine(p.continuous_kind())),
        }
    }

    /// Characteristic triplet of the simulated process (the exact law being
    /// targeted, before truncation).
    pub fn triplet(&self) -> Result<CharacteristicTriplet> {
        let d = self.dim();
        let t = match self {
            DriverSpec::Brownian { covariance, drift } => {
                CharacteristicTriplet::new(covariance.clone(), LevyMeasure::zero(d), drift.clone())?
            }
            DriverSpec::CompoundPoisson { rate, law, drift } => CharacteristicTriplet::from_true_drift(
                DMatrix::zeros(d, d),
                LevyMeasure::finite_activity(*rate, law.clone())?,
                drift.clone(),
            )?,
            DriverSpec::Stable { alpha, beta, scale, drift } => {
                let (cp, cm) = stable_density_constants(*alpha, *beta, *scale);
                let gamma = if *alpha == 1.0 {
                    drift - (cp - cm) * (1.0 - EULER_GAMMA)
                } else {
                    drift + (cp - cm) / (1.0 - alpha)
                };
                CharacteristicTriplet::new(DMatrix::zeros(1, 1), LevyMeasure::stable(*alpha, cp, cm)?, vec![gamma])?
            }
            DriverSpec::Truncated { measure, location, .. } => {
                CharacteristicTriplet::new(DMatrix::zeros(d, d), measure.clone(), location.clone())?
            }
            DriverSpec::Deterministic { drift } => {
                CharacteristicTriplet::new(DMatrix::zeros(d, d), LevyMeasure::zero(d), drift.clone())?
            }
            DriverSpec::Sum { parts } => {
                let mut gaussian = DMatrix::zeros(d, d);
                let mut drift = vec![0.0; d];
                let mut measure = LevyMeasure::zero(d);
                for p in parts {
                    let t = p.triplet()?;
                    gaussian += &t.gaussian;
                    drift.iter_mut().zip(&t.drift).for_each(|(a, b)| *a += b);
                    if !t.measure.is_zero() {
                        if !measure.is_zero() {
                            return Err(PathError::InvalidParameter(
                                "a sum of several jump parts has no single-family triplet".into(),
                            ));
                        }
                        measure = t.measure;
                    }
                }
                CharacteristicTriplet::new(gaussian, measure, drift)?
            }
            DriverSpec::Stack { parts } => {
                if parts.len() == 1 {
                    return parts[0].triplet();
                }
                let mut gaussian = DMatrix::zeros(d, d);
                let mut drift = Vec::with_capacity(d);
                let mut offset = 0;
                for p in parts {
                    let t = p.triplet()?;
                    if !t.measure.is_zero() {
                        return Err(PathError::InvalidParameter(
                            "stacked jump parts have no single-family triplet".into(),
                        ));
                    }
                    let k = t.dim();
                    gaussian.view_mut((offset, offset), (k, k)).copy_from(&t.gaussian);
                    drift.extend_from_slice(&t.drift);
                    offset += k;
                }
                CharacteristicTriplet::new(gaussian, LevyMeasure::zero(d), drift)?
            }
        };
        Ok(t)
    }

    fn truncation_rates(
        &self,
        grid: &TimeGrid,
        measure: &LevyMeasure,
        truncation: &Truncation,
        correction: Option<bool>,
        location: &[f64],
    ) -> Result<TruncationRates> {
        let mut drift = Vec::with_capacity(grid.len());
        let mut sd = Vec::with_capacity(grid.len());
        for &t in grid.times() {
            let eps = truncation.level(t);
            let comp = if eps <= 1.0 {
                measure.signed_moment(eps, 1.0)?
            } else {
                measure.signed_moment(1.0, eps)?.iter().map(|v| -v).collect()
            };
            let rate: Vec<f64> = if measure.is_zero() {
                location.to_vec()
            } else {
                location.iter().zip(comp.iter().cycle()).map(|(g, c)| g - c).collect()
            };
            drift.push(rate);
            let variance = if measure.dim() == 1 {
                measure.side_moment(2.0, 0.0, eps, Side::Both)?
            } else {
                0.0
            };
            let on = match correction {
                Some(c) => c,
                None => measure.dim() == 1 && variance.sqrt() / eps >= 5.0,
            };
            sd.push(if on { variance.sqrt() } else { 0.0 });
        }
        Ok(TruncationRates { drift, sd })
    }

    fn draw_jumps(&self, grid: &TimeGrid, stream: RngStream) -> Result<Vec<Jump>> {
        let t_max = grid.t_max();
        let mut jumps = Vec::new();
        match self {
            DriverSpec::CompoundPoisson { rate, law, .. } => {
                let mut rng = stream.rng(JUMP_PURPOSE);
                let mut times = Vec::new();
                poisson_times(&mut rng, *rate, 0.0, t_max, &mut times);
                for time in times {
                    let mut delta = vec![0.0; law.dim()];
                    law.sample_into(&mut rng, &mut delta);
                    jumps.push(Jump { time, delta });
                }
            }
            DriverSpec::Truncated { measure, truncation, .. } => {
                if measure.is_zero() {
                    return Ok(jumps);
                }
                let mut rng = stream.rng(JUMP_PURPOSE);
                let mut times = Vec::new();
                let mut lo = 0.0;
                for &hi in grid.times() {
                    let eps = truncation.level(hi);
                    let rate = measure.tail(eps, Side::Both)?;
                    if !rate.is_finite() {
                        return Err(PathError::Levy(LevyError::Configuration(format!(
                            "tail mass beyond truncation level {eps} is infinite"
                        ))));
                    }
                    times.clear();
                    poisson_times(&mut rng, rate, lo, hi, &mut times);
                    for &time in &times {
                        let mut delta = vec![0.0; measure.dim()];
                        measure.sample_beyond(eps, &mut rng, &mut delta)?;
                        jumps.push(Jump { time, delta });
                    }
                    lo = hi;
                }
            }
            DriverSpec::Sum { parts } => {
                for (k, p) in parts.iter().enumerate() {
                    jumps.extend(p.draw_jumps(grid, stream.child(k as u64))?);
                }
                jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
                let mut merged: Vec<Jump> = Vec::with_capacity(jumps.len());
                for j in jumps {
                    match merged.last_mut() {
                        Some(last) if last.time == j.time => {
                            last.delta.iter_mut().zip(&j.delta).for_each(|(a, b)| *a += b)
                        }
                        _ => merged.push(j),
                    }
                }
                return Ok(merged);
            }
            DriverSpec::Stack { parts } => {
                let d = self.dim();
                let mut offset = 0;
                for (k, p) in parts.iter().enumerate() {
                    for j in p.draw_jumps(grid, stream.child(k as u64))? {
                        let mut delta = vec![0.0; d];
                        delta[offset..offset + p.dim()].copy_from_slice(&j.delta);
                        jumps.push(Jump { time: j.time, delta });
                    }
                    offset += p.dim();
                }
                jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
                let mut merged: Vec<Jump> = Vec::with_capacity(jumps.len());
                for j in jumps {
                    match merged.last_mut() {
                        Some(last) if last.time == j.time => {
                            last.delta.iter_mut().zip(&j.delta).for_each(|(a, b)| *a += b)
                        }
                        _ => merged.push(j),
                    }
                }
                return Ok(merged);
            }
            _ => {}
        }
        Ok(jumps)
    }

    /// Continuous increments over `(times[i−1], times[i]]` (from 0 for `i = 0`),
    /// flattened time-major.
    fn continuous_increments(&self, times: &[f64], grid: &TimeGrid, stream: RngStream) -> Result<Vec<f64>> {
        let d = self.dim();
        let n = times.len();
        let mut out = vec![0.0; n * d];
        let dt = |i: usize| times[i] - if i == 0 { 0.0 } else { times[i - 1] };
        match self {
            DriverSpec::Brownian { covariance, drift } => {
                let factor = psd_factor(covariance)?;
                let stochastic = covariance.iter().any(|v| *v != 0.0);
                let mut rng = stream.rng(CONTINUOUS_PURPOSE);
                let mut z = DVector::zeros(d);
                for i in 0..n {
                    let h = dt(i);
                    let row = &mut out[i * d..(i + 1) * d];
                    if stochastic {
                        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                        let w = &factor * &z * h.sqrt();
                        row.iter_mut().zip(w.iter()).for_each(|(o, v)| *o = *v);
                    }
                    row.iter_mut().zip(drift).for_each(|(o, g)| *o += g * h);
                }
            }
            DriverSpec::CompoundPoisson { drift, .. } | DriverSpec::Deterministic { drift } => {
                for i in 0..n {
                    let h = dt(i);
                    out[i * d..(i + 1) * d].iter_mut().zip(drift).for_each(|(o, g)| *o = g * h);
                }
            }
            DriverSpec::Stable { alpha, beta, scale, drift } => {
                let mut rng = stream.rng(CONTINUOUS_PURPOSE);
                for (i, o) in out.iter_mut().enumerate().take(n) {
                    let h = dt(i);
                    let x = stable_variate(&mut rng, *alpha, *beta);
                    *o = if *alpha == 1.0 {
                        let s = scale * h;
                        s * x + beta * s * s.ln() / FRAC_PI_2 + drift * h
                    } else {
                        scale * h.powf(1.0 / alpha) * x + drift * h
                    };
                }
            }
            DriverSpec::Truncated {
                measure,
                truncation,
                correction,
                location,
            } => {
                let rates = self.truncation_rates(grid, measure, truncation, *correction, location)?;
                let mut rng = stream.rng(CONTINUOUS_PURPOSE);
                for i in 0..n {
                    let h = dt(i);
                    let g = grid.interval_of(times[i]);
                    let row = &mut out[i * d..(i + 1) * d];
                    row.iter_mut().zip(&rates.drift[g]).for_each(|(o, r)| *o = r * h);
                    if rates.sd[g] > 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        row[0] += rates.sd[g] * h.sqrt() * z;
                    }
                }
            }
            DriverSpec::Sum { parts } => {
                for (k, p) in parts.iter().enumerate() {
                    let inc = p.continuous_increments(times, grid, stream.child(k as u64))?;
                    out.iter_mut().zip(inc).for_each(|(o, v)| *o += v);
                }
            }
            DriverSpec::Stack { parts } => {
                let mut offset = 0;
                for (k, p) in parts.iter().enumerate() {
                    let pd = p.dim();
                    let inc = p.continuous_increments(times, grid, stream.child(k as u64))?;
                    for i in 0..n {
                        out[i * d + offset..i * d + offset + pd].copy_from_slice(&inc[i * pd..(i + 1) * pd]);
                    }
                    offset += pd;
                }
            }
        }
        Ok(out)
    }
}

/// Samples one driver path on `grid` (plus its jump times) from `stream`.
pub fn sample_driver(spec: &DriverSpec, grid: &TimeGrid, stream: RngStream) -> Result<PathSkeleton> {
    let d = spec.dim();
    sample_driver_shaped(spec, (d, 1), grid, stream)
}

/// As [`sample_driver`], reading the `rows·cols` components column-major.
pub fn sample_driver_shaped(
    spec: &DriverSpec,
    shape: (usize, usize),
    grid: &TimeGrid,
    stream: RngStream,
) -> Result<PathSkeleton> {
    spec.validate()?;
    let d = spec.dim();
    if shape.0 * shape.1 != d {
        return Err(PathError::DimensionMismatch {
            expected: d,
            got: shape.0 * shape.1,
        });
    }
    let jumps = spec.draw_jumps(grid, stream)?;
    let jump_times: Vec<f64> = jumps.iter().map(|j| j.time).collect();
    let times = merge_times(grid.times(), &jump_times);
    let cont = spec.continuous_increments(&times, grid, stream)?;

    let mut values = Vec::with_capacity(times.len() * d);
    let mut jump_indices = Vec::with_capacity(jumps.len());
    let mut pre_jump = Vec::with_capacity(jumps.len() * d);
    let mut current = vec![0.0; d];
    let mut next_jump = 0;
    for (i, &t) in times.iter().enumerate() {
        current.iter_mut().zip(&cont[i * d..(i + 1) * d]).for_each(|(c, v)| *c += v);
        if next_jump < jumps.len() && jumps[next_jump].time == t {
            jump_indices.push(i);
            pre_jump.extend_from_slice(&current);
            current.iter_mut().zip(&jumps[next_jump].delta).for_each(|(c, v)| *c += v);
            next_jump += 1;
        }
        values.extend_from_slice(&current);
    }
    let grid_indices = grid
        .times()
        .iter()
        .map(|g| times.binary_search_by(|t| t.total_cmp(g)).expect("grid time present"))
        .collect();
    PathSkeleton::from_parts(SkeletonParts {
        times,
        shape,
        origin: vec![0.0; d],
        values,
        grid_indices,
        jump_indices,
        pre_jump,
        seed_id: stream.id(),
        continuous: spec.continuous_kind(),
    })
}

/// `n` independent paths; path `i` uses stream `(seed, i)`.
pub fn sample_ensemble(spec: &DriverSpec, grid: &TimeGrid, seed: u64, n: usize) -> Result<Vec<PathSkeleton>> {
    let d = spec.dim();
    sample_ensemble_shaped(spec, (d, 1), grid, seed, n)
}

pub fn sample_ensemble_shaped(
    spec: &DriverSpec,
    shape: (usize, usize),
    grid: &TimeGrid,
    seed: u64,
    n: usize,
) -> Result<Vec<PathSkeleton>> {
    spec.validate()?;
    crate::par::try_map_indexed(n, |i| sample_driver_shaped(spec, shape, grid, RngStream::new(seed, i as u64)))
}

pub fn sample_brownian(grid: &TimeGrid, a: DMatrix<f64>, drift: Vec<f64>, stream: RngStream) -> Result<PathSkeleton> {
    sample_driver(&DriverSpec::Brownian { covariance: a, drift }, grid, stream)
}

pub fn sample_compound_poisson(
    grid: &TimeGrid,
    rate: f64,
    law: JumpLaw,
    drift: Vec<f64>,
    stream: RngStream,
) -> Result<PathSkeleton> {
    sample_driver(&DriverSpec::CompoundPoisson { rate, law, drift }, grid, stream)
}

pub fn sample_stable(grid: &TimeGrid, alpha: f64, beta: f64, scale: f64, stream: RngStream) -> Result<PathSkeleton> {
    sample_driver(
        &DriverSpec::Stable {
            alpha,
            beta,
            scale,
            drift: 0.0,
        },
        grid,
        stream,
    )
}

/// Truncated sampler without drift: zero true drift for measures of bounded
/// variation, zero location parameter otherwise.
pub fn sample_truncated_infinite_activity(
    grid: &TimeGrid,
    measure: LevyMeasure,
    eps: f64,
    gaussian_correction: Option<bool>,
    stream: RngStream,
) -> Result<PathSkeleton> {
    let compensator = measure.signed_moment(0.0, 1.0)?;
    let location = if compensator.iter().all(|c| c.is_finite()) && compensator.len() == measure.dim() {
        compensator
    } else {
        vec![0.0; measure.dim()]
    };
    sample_driver(
        &DriverSpec::Truncated {
            measure,
            truncation: Truncation::Fixed { eps },
            correction: gaussian_correction,
            location,
        },
        grid,
        stream,
    )
}

/// Stable driver resolved into individual jumps down to `delta · t^{1/α}` on
/// each grid interval.
pub fn shot_noise_stable(alpha: f64, c_plus: f64, c_minus: f64, delta: f64) -> Result<DriverSpec> {
    let measure = LevyMeasure::stable(alpha, c_plus, c_minus)?;
    let gamma = if alpha == 1.0 {
        -(c_plus - c_minus) * (1.0 - EULER_GAMMA)
    } else {
        (c_plus - c_minus) / (1.0 - alpha)
    };
    Ok(DriverSpec::Truncated {
        measure,
        truncation: Truncation::Relative { delta, index: alpha },
        correction: None,
        location: vec![gamma],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::make_grid;
    use rand::SeedableRng;

    #[test]
    fn stable_constants_round_trip() {
        for alpha in [0.5, 1.0, 1.5] {
            let (cp, cm) = stable_density_constants(alpha, 0.3, 1.7);
            let (s, b) = stable_scale_from_density(alpha, cp, cm);
            assert!((s - 1.7).abs() < 1e-12 && (b - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn stable_triplet_has_cms_exponent() {
        // exp(ψ(u)) must equal the S1 characteristic function.
        for (alpha, beta) in [(0.6, 0.5), (1.5, -0.4), (1.0, 0.0)] {
            let spec = DriverSpec::Stable {
                alpha,
                beta,
                scale: 1.3,
                drift: 0.0,
            };
            let t = spec.triplet().unwrap();
            for u in [0.4f64, -1.7] {
                let psi = t.characteristic_exponent(&[u]).unwrap();
                let expected = if alpha == 1.0 {
                    nalgebra::Complex::new(-1.3 * u.abs(), 0.0)
                } else {
                    let s = 1.3f64.powf(alpha) * u.abs().powf(alpha);
                    nalgebra::Complex::new(-s, s * beta * u.signum() * (FRAC_PI_2 * alpha).tan())
                };
                assert!((psi - expected).norm() < 1e-10, "α={alpha} u={u}: {psi} vs {expected}");
            }
        }
    }

    #[test]
    fn cms_symmetric_cauchy_quartiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v: Vec<f64> = (0..20_000).map(|_| stable_variate(&mut rng, 1.0, 0.0)).collect();
        v.sort_by(f64::total_cmp);
        let q75 = crate::stats::quantile_sorted(&v, 0.75);
        assert!((q75 - 1.0).abs() < 0.05, "{q75}");
    }

    #[test]
    fn deterministic_path_is_linear() {
        let g = make_grid(1.0, 0.5, 1).unwrap();
        let p = sample_brownian(&g, DMatrix::zeros(1, 1), vec![1.0], RngStream::new(0, 0)).unwrap();
        assert_eq!(p.values(), &[0.5, 1.0]);
        assert_eq!(p.jump_count(), 0);
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let g = make_grid(1.0, 0.5, 1).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            sample_brownian(&g, a, vec![0.0; 2], RngStream::new(0, 0)),
            Err(PathError::NotPositiveSemidefinite)
        ));
    }

    #[test]
    fn infinite_tail_truncation_is_rejected() {
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let tab = crate::levy::TabulatedDensity::from_fn(grid, |x| x.powi(-2), None).unwrap();
        let g = make_grid(1.0, 0.5, 3).unwrap();
        let r = sample_truncated_infinite_activity(&g, LevyMeasure::Tabulated(tab), 0.01, None, RngStream::new(0, 0));
        assert!(r.is_err());
    }
}
