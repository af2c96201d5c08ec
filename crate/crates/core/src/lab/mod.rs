//! Monte Carlo verifiers for short-time behaviour of drivers and solutions.

mod cluster;
mod limit;
mod rescale;
mod stable;

pub use cluster::{
    cluster_set_estimate, cluster_transfer_test, limsup_estimate, ClusterSet, Ellipse, LimsupEstimate, LIMSUP_DECADES,
};
pub use limit::{
    coupling_gap, estimate_limit, integral_lemma_check, qv_decay_check, verify_in_probability, LimitOptions,
};
pub use rescale::{rescale, rescale_solutions, RescaledEnsemble};
pub use stable::{
    ks_distance_to_stable, stable_cdf, verify_distributional_transfer, DistributionalSpec, StableCdf, TargetLaw,
};

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::levy::{predict_short_time, CharacteristicTriplet, LevyError, ScalingFunction, ShortTimePrediction, ShortTimeVerdict};
use crate::paths::PathError;
use crate::sde::SdeError;
use crate::stats::Summary;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("need at least {needed} grid times, got {got}")]
    TooFewTimes { needed: usize, got: usize },
    #[error("grid too short: {0}")]
    ShortGrid(String),
    #[error("no rescaled points fall in the shell [{lo:e}, {hi:e}]")]
    EmptyShell { lo: f64, hi: f64 },
    #[error("ensembles are not paired: {0}")]
    Unpaired(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Outcome of a verifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    ConvergesTo { value: Vec<f64> },
    DivergesInNorm,
    Oscillates,
    Inconclusive,
    /// Test-style verifiers (distributional checks) report pass or fail.
    Pass,
    Fail,
}

/// Log-log slope of a per-time statistic against `t` with a bootstrap
/// interval. Positive slopes mean the statistic shrinks as `t ↓ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub statistic: String,
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Trend {
    /// Whether the interval contains slopes of both signs.
    pub fn spans_zero(&self) -> bool {
        self.ci_low < 0.0 && self.ci_high > 0.0
    }
}

/// One row of the per-time CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSummary {
    pub time: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub max: f64,
    pub n_paths: usize,
}

impl TimeSummary {
    pub fn of(time: f64, values: &[f64]) -> Self {
        let s = Summary::of(values);
        Self {
            time,
            median: s.median,
            q25: s.q25,
            q75: s.q75,
            max: s.max,
            n_paths: s.n,
        }
    }
}

pub const TIME_CSV_HEADER: &str = "time,median,q25,q75,max,n_paths";

/// Structured result of one verifier run. Per-time rows are ordered by
/// increasing time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub verifier: String,
    pub scaling: Option<String>,
    pub verdict: Verdict,
    pub per_time: Vec<TimeSummary>,
    /// The trend the verdict was decided on.
    pub trend: Option<Trend>,
    pub norm_trend: Option<Trend>,
    pub prediction: Option<ShortTimePrediction>,
    pub agreement: Option<bool>,
    /// Whether the verifier's acceptance rule holds.
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ScalingReport {
    pub fn new(verifier: impl Into<String>, verdict: Verdict) -> Self {
        Self {
            verifier: verifier.into(),
            scaling: None,
            verdict,
            per_time: Vec::new(),
            trend: None,
            norm_trend: None,
            prediction: None,
            agreement: None,
            passed: false,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn converged_value(&self) -> Option<&[f64]> {
        match &self.verdict {
            Verdict::ConvergesTo { value } => Some(value),
            _ => None,
        }
    }

    /// Per-time statistics as `time,median,q25,q75,max,n_paths`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{TIME_CSV_HEADER}")?;
        for r in &self.per_time {
            writeln!(out, "{:e},{:e},{:e},{:e},{:e},{}", r.time, r.median, r.q25, r.q75, r.max, r.n_paths)?;
        }
        Ok(())
    }
}

/// What the theory predicts for an ensemble: the driver triplet and, for
/// solutions, `σ(x)` through which the driver limit is transferred.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub triplet: CharacteristicTriplet,
    pub transfer: Option<DMatrix<f64>>,
}

impl Oracle {
    pub fn driver(triplet: CharacteristicTriplet) -> Self {
        Self {
            triplet,
            transfer: None,
        }
    }

    pub fn solution(triplet: CharacteristicTriplet, sigma_at_x: DMatrix<f64>) -> Self {
        Self {
            triplet,
            transfer: Some(sigma_at_x),
        }
    }

    /// Driver prediction pushed through `σ(x)`.
    pub fn predict(&self, f: &ScalingFunction) -> Result<ShortTimePrediction> {
        let mut p = predict_short_time(&self.triplet, f)?;
        if let Some(s) = &self.transfer {
            match &mut p.verdict {
                ShortTimeVerdict::FiniteLimit { limit } => {
                    let v = s * nalgebra::DVector::from_column_slice(limit);
                    *limit = v.as_slice().to_vec();
                }
                ShortTimeVerdict::OscillatesLil { limsup, .. } => {
                    *limsup *= s.singular_values().max();
                }
                _ => {}
            }
        }
        Ok(p)
    }
}
