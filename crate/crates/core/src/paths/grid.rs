use serde::{Deserialize, Serialize};

use super::{PathError, Result};

/// Observation times, stored increasing. Geometric grids are
/// `t_max·θ^k, k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    theta: Option<f64>,
}

impl TimeGrid {
    /// Geometric grid `{t_max·θ^k : k = 0..=count}`.
    pub fn geometric(t_max: f64, theta: f64, count: usize) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(PathError::InvalidParameter(format!("grid ratio must lie in (0, 1), got {theta}")));
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(PathError::InvalidParameter(format!("t_max must be positive, got {t_max}")));
        }
        if count == 0 {
            return Err(PathError::InvalidParameter("grid needs at least one ratio step".into()));
        }
        let mut times: Vec<f64> = (0..=count).map(|k| t_max * theta.powf(k as f64)).collect();
        times.reverse();
        if times[0] <= 0.0 {
            return Err(PathError::InvalidParameter("grid underflows to zero".into()));
        }
        Ok(Self {
            times,
            theta: Some(theta),
        })
    }

    /// Geometric grid whose smallest time is the last `t_max·θ^k ≥ t_min`.
    pub fn geometric_to(t_max: f64, theta: f64, t_min: f64) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max) {
            return Err(PathError::InvalidParameter(format!("need 0 < t_min < t_max, got {t_min}")));
        }
        let k = ((t_min / t_max).ln() / theta.ln() + 1e-9).floor() as usize;
        Self::geometric(t_max, theta, k.max(1))
    }

    /// `n` equal steps on `(0, t_max]`.
    pub fn uniform(t_max: f64, n: usize) -> Result<Self> {
        if !(t_max > 0.0) || n == 0 {
            return Err(PathError::InvalidParameter("uniform grid needs t_max > 0 and n ≥ 1".into()));
        }
        Ok(Self {
            times: (1..=n).map(|i| t_max * i as f64 / n as f64).collect(),
            theta: None,
        })
    }

    /// Arbitrary strictly increasing positive times.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || !(times[0] > 0.0) || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(PathError::InvalidParameter("grid times must be positive and strictly increasing".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(PathError::InvalidParameter("grid times must be finite".into()));
        }
        Ok(Self { times, theta: None })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn t_min(&self) -> f64 {
        self.times[0]
    }

    /// Number of ratio steps `K` (one less than the number of times).
    pub fn count(&self) -> usize {
        self.times.len() - 1
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid interval `(t_{i−1}, t_i]` containing `t` (interval 0 is `(0, t_min]`).
    pub fn interval_of(&self, t: f64) -> usize {
        self.times.partition_point(|&g| g < t).min(self.times.len() - 1)
    }
}

pub fn make_grid(t_max: f64, theta: f64, count: usize) -> Result<TimeGrid> {
    TimeGrid::geometric(t_max, theta, count)
}
