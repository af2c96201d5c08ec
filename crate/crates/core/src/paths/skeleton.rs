use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PathError, Result};
use crate::rng::mix64;

/// What happens between consecutive stored times, apart from jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousKind {
    /// Constant between jumps.
    None,
    /// Linear in time between stored times (deterministic drift).
    Linear,
    /// Random (Brownian, stable increments, small-jump substitutes).
    Stochastic,
}

impl ContinuousKind {
    pub fn combine(self, other: Self) -> Self {
        use ContinuousKind::*;
        match (self, other) {
            (Stochastic, _) | (_, Stochastic) => Stochastic,
            (Linear, _) | (_, Linear) => Linear,
            _ => None,
        }
    }
}

/// A path observed on a jump-adapted time set.
///
/// Values are stored time-major; each row is the column-major vectorization
/// of an `rows × cols` matrix (`cols == 1` for vector paths). At every jump
/// time the left limit is kept explicitly and the ledger holds
/// `value − left limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSkeleton {
    times: Vec<f64>,
    rows: usize,
    cols: usize,
    origin: Vec<f64>,
    values: Vec<f64>,
    grid_indices: Vec<usize>,
    jump_indices: Vec<usize>,
    pre_jump: Vec<f64>,
    jumps: Vec<f64>,
    seed_id: u64,
    continuous: ContinuousKind,
}

/// Parts from which a [`PathSkeleton`] is assembled.
#[derive(Debug, Clone)]
pub struct SkeletonParts {
    pub times: Vec<f64>,
    pub shape: (usize, usize),
    pub origin: Vec<f64>,
    pub values: Vec<f64>,
    pub grid_indices: Vec<usize>,
    pub jump_indices: Vec<usize>,
    pub pre_jump: Vec<f64>,
    pub seed_id: u64,
    pub continuous: ContinuousKind,
}

impl PathSkeleton {
    /// Builds and validates a skeleton; the ledger is derived as
    /// `values − pre_jump` at each jump index.
    pub fn from_parts(p: SkeletonParts) -> Result<Self> {
        let dim = p.shape.0 * p.shape.1;
        if dim == 0 {
            return Err(PathError::InvalidParameter("path dimension must be positive".into()));
        }
        if p.origin.len() != dim
            || p.values.len() != p.times.len() * dim
            || p.pre_jump.len() != p.jump_indices.len() * dim
        {
            return Err(PathError::InvalidParameter("path arrays do not match the declared shape".into()));
        }
        let mut jumps = Vec::with_capacity(p.pre_jump.len());
        for (j, &i) in p.jump_indices.iter().enumerate() {
            if i >= p.times.len() {
                return Err(PathError::InvalidParameter(format!("jump index {i} out of range")));
            }
            for c in 0..dim {
                jumps.push(p.values[i * dim + c] - p.pre_jump[j * dim + c]);
            }
        }
        let s = Self {
            times: p.times,
            rows: p.shape.0,
            cols: p.shape.1,
            origin: p.origin,
            values: p.values,
            grid_indices: p.grid_indices,
            jump_indices: p.jump_indices,
            pre_jump: p.pre_jump,
            jumps,
            seed_id: p.seed_id,
            continuous: p.continuous,
        };
        s.validate()?;
        Ok(s)
    }

    /// Path known only at `times` (all grid points, no jumps).
    pub fn from_grid_values(
        times: Vec<f64>,
        shape: (usize, usize),
        origin: Vec<f64>,
        values: Vec<f64>,
        continuous: ContinuousKind,
    ) -> Result<Self> {
        let n = times.len();
        Self::from_parts(SkeletonParts {
            times,
            shape,
            origin,
            values,
            grid_indices: (0..n).collect(),
            jump_indices: Vec::new(),
            pre_jump: Vec::new(),
            seed_id: 0,
            continuous,
        })
    }

    /// Checks every structural invariant, including exactness of the ledger.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PathError::InvalidParameter(m.to_string()));
        if self.times.is_empty() {
            return bad("path has no times");
        }
        if !(self.times[0] > 0.0) || self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("path times must be positive and strictly increasing");
        }
        if self.grid_indices.windows(2).any(|w| w[0] >= w[1])
            || self.grid_indices.last().is_some_and(|&i| i >= self.times.len())
        {
            return bad("grid indices must be increasing and in range");
        }
        if self.jump_indices.windows(2).any(|w| w[0] >= w[1]) {
            return bad("jump indices must be strictly increasing");
        }
        let dim = self.dim();
        for (j, &i) in self.jump_indices.iter().enumerate() {
            for c in 0..dim {
                if self.values[i * dim + c] - self.pre_jump[j * dim + c] != self.jumps[j * dim + c] {
                    return bad("jump ledger is inconsistent with values");
                }
            }
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    /// Value just before time index `i` (the left limit at a jump).
    pub fn left_value(&self, i: usize) -> &[f64] {
        match self.jump_slot(i) {
            Some(j) => self.pre_jump(j),
            None => self.value(i),
        }
    }

    /// Value at the previous stored time, or the origin for `i = 0`.
    pub fn previous_value(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.origin
        } else {
            self.value(i - 1)
        }
    }

    pub fn previous_time(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.times[i - 1]
        }
    }

    pub fn grid_indices(&self) -> &[usize] {
        &self.grid_indices
    }

    pub fn grid_times(&self) -> Vec<f64> {
        self.grid_indices.iter().map(|&i| self.times[i]).collect()
    }

    pub fn grid_value(&self, k: usize) -> &[f64] {
        self.value(self.grid_indices[k])
    }

    pub fn jump_count(&self) -> usize {
        self.jump_indices.len()
    }

    pub fn jump_indices(&self) -> &[usize] {
        &self.jump_indices
    }

    pub fn jump_time(&self, j: usize) -> f64 {
        self.times[self.jump_indices[j]]
    }

    pub fn pre_jump(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.pre_jump[j * d..(j + 1) * d]
    }

    /// `ΔL` of the `j`-th jump.
    pub fn jump(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.jumps[j * d..(j + 1) * d]
    }

    /// Ledger position of a jump at time index `i`, if any.
    pub fn jump_slot(&self, i: usize) -> Option<usize> {
        self.jump_indices.binary_search(&i).ok()
    }

    pub fn seed_id(&self) -> u64 {
        self.seed_id
    }

    pub fn continuous(&self) -> ContinuousKind {
        self.continuous
    }

    /// Value at index `i` as a matrix.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, self.value(i))
    }

    pub fn origin_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.origin)
    }

    /// Entry-wise transpose of a matrix-valued path.
    pub fn transpose(&self) -> PathSkeleton {
        let (r, c) = (self.rows, self.cols);
        let permute = |block: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(block.len());
            for chunk in block.chunks_exact(r * c) {
                for i in 0..r {
                    for j in 0..c {
                        out.push(chunk[i + j * r]);
                    }
                }
            }
            out
        };
        PathSkeleton {
            times: self.times.clone(),
            rows: c,
            cols: r,
            origin: permute(&self.origin),
            values: permute(&self.values),
            grid_indices: self.grid_indices.clone(),
            jump_indices: self.jump_indices.clone(),
            pre_jump: permute(&self.pre_jump),
            jumps: permute(&self.jumps),
            seed_id: self.seed_id,
            continuous: self.continuous,
        }
    }

    /// Re-expresses the path on the superset `times` of its own times.
    /// New points are interpolated linearly, which is exact only when the
    /// continuous part is absent or linear.
    pub fn align_to(&self, times: &[f64]) -> Result<PathSkeleton> {
        if times == self.times.as_slice() {
            return Ok(self.clone());
        }
        if self.continuous == ContinuousKind::Stochastic {
            return Err(PathError::GridMismatch(
                "cannot insert times into a path with a random continuous part".into(),
            ));
        }
        let d = self.dim();
        let mut values = Vec::with_capacity(times.len() * d);
        let mut grid_indices = Vec::with_capacity(self.grid_indices.len());
        let mut jump_indices = Vec::with_capacity(self.jump_indices.len());
        let mut pre_jump = Vec::with_capacity(self.pre_jump.len());
        let mut src = 0usize;
        for (i, &t) in times.iter().enumerate() {
            while src < self.times.len() && self.times[src] < t {
                src += 1;
            }
            if src == self.times.len() {
                return Err(PathError::GridMismatch(format!("time {t} lies beyond the path")));
            }
            if self.times[src] == t {
                values.extend_from_slice(self.value(src));
                if self.grid_indices.binary_search(&src).is_ok() {
                    grid_indices.push(i);
                }
                if let Some(j) = self.jump_slot(src) {
                    jump_indices.push(i);
                    pre_jump.extend_from_slice(self.pre_jump(j));
                }
            } else {
                let (t0, v0) = (self.previous_time(src), self.previous_value(src));
                let v1 = self.left_value(src);
                let w = (t - t0) / (self.times[src] - t0);
                values.extend(v0.iter().zip(v1).map(|(a, b)| a + w * (b - a)));
            }
        }
        if grid_indices.len() != self.grid_indices.len() || jump_indices.len() != self.jump_indices.len() {
            return Err(PathError::GridMismatch("target times do not contain the path's own times".into()));
        }
        PathSkeleton::from_parts(SkeletonParts {
            times: times.to_vec(),
            shape: self.shape(),
            origin: self.origin.clone(),
            values,
            grid_indices,
            jump_indices,
            pre_jump,
            seed_id: self.seed_id,
            continuous: self.continuous,
        })
    }
}

/// Sorted union of two increasing time lists.
pub fn merge_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if y < x => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Stacks scalar paths, given column-major (`entries[i + j·rows]`), into an
/// `rows × cols` matrix path. The grid parts must coincide; jump times are
/// merged.
pub fn assemble_matrix_driver(entries: &[PathSkeleton], rows: usize, cols: usize) -> Result<PathSkeleton> {
    if entries.len() != rows * cols || entries.is_empty() {
        return Err(PathError::InvalidParameter(format!(
            "{rows}×{cols} assembly needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    if entries.iter().any(|e| e.dim() != 1) {
        return Err(PathError::InvalidParameter("matrix entries must be scalar paths".into()));
    }
    let grid = entries[0].grid_times();
    if entries.iter().any(|e| e.grid_times() != grid) {
        return Err(PathError::GridMismatch("entry paths are observed on different grids".into()));
    }
    let times = entries.iter().skip(1).fold(entries[0].times.clone(), |acc, e| merge_times(&acc, &e.times));
    let aligned: Vec<PathSkeleton> = entries.iter().map(|e| e.align_to(&times)).collect::<Result<_>>()?;
    let dim = rows * cols;
    let mut values = vec![0.0; times.len() * dim];
    for (c, e) in aligned.iter().enumerate() {
        for i in 0..times.len() {
            values[i * dim + c] = e.values[i];
        }
    }
    let mut jump_indices: Vec<usize> = aligned.iter().flat_map(|e| e.jump_indices.iter().copied()).collect();
    jump_indices.sort_unstable();
    jump_indices.dedup();
    let mut pre_jump = Vec::with_capacity(jump_indices.len() * dim);
    for &i in &jump_indices {
        for e in &aligned {
            pre_jump.push(e.left_value(i)[0]);
        }
    }
    let seed_id = entries.iter().fold(0u64, |h, e| mix64(h ^ e.seed_id));
    PathSkeleton::from_parts(SkeletonParts {
        grid_indices: aligned[0].grid_indices.clone(),
        times,
        shape: (rows, cols),
        origin: aligned.iter().map(|e| e.origin[0]).collect(),
        values,
        jump_indices,
        pre_jump,
        seed_id,
        continuous: aligned.iter().fold(ContinuousKind::None, |k, e| k.combine(e.continuous)),
    })
}

pub const PATH_CSV_HEADER: &str = "path_id,time,component_index,value,is_pre_jump";

/// Writes `paths` as rows `path_id,time,component_index,value,is_pre_jump`
/// (plus a trailing `kind` column when given). At a jump time the left-limit
/// row precedes the value row.
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[PathSkeleton], kind: Option<&str>) -> io::Result<()> {
    match kind {
        Some(_) => writeln!(out, "{PATH_CSV_HEADER},kind")?,
        None => writeln!(out, "{PATH_CSV_HEADER}")?,
    }
    let suffix = kind.map(|k| format!(",{k}")).unwrap_or_default();
    for (p, path) in paths.iter().enumerate() {
        for (i, &t) in path.times.iter().enumerate() {
            if let Some(j) = path.jump_slot(i) {
                for (c, v) in path.pre_jump(j).iter().enumerate() {
                    writeln!(out, "{p},{t},{c},{v},1{suffix}")?;
                }
            }
            for (c, v) in path.value(i).iter().enumerate() {
                writeln!(out, "{p},{t},{c},{v},0{suffix}")?;
            }
        }
    }
    Ok(())
}
