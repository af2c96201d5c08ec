use super::{LabError, Result};
use crate::levy::ScalingFunction;
use crate::paths::PathSkeleton;
use crate::sde::SolutionPath;

/// Values `(X_{t_k} − center)/f(t_k)` at the shared grid times of an
/// ensemble, with their Euclidean norms. Times are increasing.
#[derive(Debug, Clone)]
pub struct RescaledEnsemble {
    times: Vec<f64>,
    dim: usize,
    n_paths: usize,
    values: Vec<f64>,
    norms: Vec<f64>,
    scaling: ScalingFunction,
}

impl RescaledEnsemble {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn scaling(&self) -> &ScalingFunction {
        &self.scaling
    }

    /// Rescaled vector of path `p` at time index `k`.
    pub fn value(&self, p: usize, k: usize) -> &[f64] {
        let start = (p * self.times.len() + k) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn norm(&self, p: usize, k: usize) -> f64 {
        self.norms[p * self.times.len() + k]
    }

    /// Norms of all paths at time index `k`.
    pub fn norms_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.norm(p, k)).collect()
    }

    /// Component `c` of all paths at time index `k`.
    pub fn component_at(&self, k: usize, c: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, k)[c]).collect()
    }

    /// Keeps only times in `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.times.len())
            .filter(|&k| self.times[k] >= lo && self.times[k] <= hi)
            .collect();
        if keep.is_empty() {
            return Err(LabError::InvalidParameter(format!("no grid times in [{lo:e}, {hi:e}]")));
        }
        let mut values = Vec::with_capacity(self.n_paths * keep.len() * self.dim);
        let mut norms = Vec::with_capacity(self.n_paths * keep.len());
        for p in 0..self.n_paths {
            for &k in &keep {
                values.extend_from_slice(self.value(p, k));
                norms.push(self.norm(p, k));
            }
        }
        Ok(Self {
            times: keep.iter().map(|&k| self.times[k]).collect(),
            dim: self.dim,
            n_paths: self.n_paths,
            values,
            norms,
            scaling: self.scaling.clone(),
        })
    }

    /// Multiplies every rescaled value by `c > 0`; equals rescaling with `f/c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            norms: self.norms.iter().map(|v| v * c).collect(),
            scaling: self.scaling.clone().scaled(1.0 / c),
            ..self.clone()
        }
    }
}

/// Rescales the grid values of an ensemble sharing one time grid.
pub fn rescale(paths: &[PathSkeleton], f: &ScalingFunction, center: &[f64]) -> Result<RescaledEnsemble> {
    let first = paths
        .first()
        .ok_or_else(|| LabError::InvalidParameter("ensemble needs at least two paths".into()))?;
    if paths.len() < 2 {
        return Err(LabError::InvalidParameter("ensemble needs at least two paths".into()));
    }
    let times = first.grid_times();
    let dim = first.dim();
    if center.len() != dim {
        return Err(LabError::InvalidParameter(format!(
            "center has {} entries, paths have dimension {dim}",
            center.len()
        )));
    }
    let scale: Vec<f64> = times.iter().map(|&t| f.eval(t)).collect::<std::result::Result<_, _>>()?;
    let mut values = Vec::with_capacity(paths.len() * times.len() * dim);
    let mut norms = Vec::with_capacity(paths.len() * times.len());
    for p in paths {
        if p.dim() != dim || p.grid_indices().len() != times.len() {
            return Err(LabError::Unpaired("paths do not share one grid".into()));
        }
        for (k, &s) in scale.iter().enumerate() {
            if p.times()[p.grid_indices()[k]] != times[k] {
                return Err(LabError::Unpaired("paths do not share one grid".into()));
            }
            let mut sq = 0.0;
            for (v, c) in p.grid_value(k).iter().zip(center) {
                let r = (v - c) / s;
                if !r.is_finite() {
                    return Err(LabError::InvalidParameter(format!("rescaled value is not finite at t = {:e}", times[k])));
                }
                sq += r * r;
                values.push(r);
            }
            norms.push(sq.sqrt());
        }
    }
    Ok(RescaledEnsemble {
        times,
        dim,
        n_paths: paths.len(),
        values,
        norms,
        scaling: f.clone(),
    })
}

pub fn rescale_solutions(solutions: &[SolutionPath], f: &ScalingFunction, center: &[f64]) -> Result<RescaledEnsemble> {
    let paths: Vec<PathSkeleton> = solutions.iter().map(|s| s.path.clone()).collect();
    rescale(&paths, f, center)
}
