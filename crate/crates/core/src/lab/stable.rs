use std::collections::HashMap;
use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{LabError, Result, ScalingReport, TimeSummary, Verdict};
use crate::levy::ScalingFunction;
use crate::par;
use crate::paths::{sample_ensemble, DriverSpec, TimeGrid};
use crate::quad::{integrate, QuadOptions};
use crate::sde::{solve_ensemble, SigmaMap, Substeps};
use crate::stats::{ks_p_value, ks_statistic};

const TABLE_HALF: usize = 600;
/// Table covers `|x| ≤ scale · sinh(TABLE_SPAN)`.
const TABLE_SPAN: f64 = 6.0;

/// CDF of the S1 law `S_α(scale, β, 0)` by Fourier inversion, tabulated
/// once and linearly interpolated. Beyond the table the tails decay like
/// `|x|^{−α}`.
#[derive(Debug, Clone)]
pub struct StableCdf {
    alpha: f64,
    beta: f64,
    scale: f64,
    xs: Vec<f64>,
    fs: Vec<f64>,
}

fn inversion(alpha: f64, beta: f64, scale: f64, x: f64) -> f64 {
    let upper = 40f64.powf(1.0 / alpha) / scale;
    let integrand = |u: f64| {
        if u == 0.0 {
            return 0.0;
        }
        let su = scale * u;
        let (damp, phase) = if alpha == 1.0 {
            (su, -beta * FRAC_2_PI * su * u.ln())
        } else {
            let a = su.powf(alpha);
            (a, beta * a * (FRAC_PI_2 * alpha).tan())
        };
        (-damp).exp() * (phase - u * x).sin() / u
    };
    // Split at oscillation periods so every piece is smooth.
    let period = 2.0 * PI / x.abs().max(1.0 / scale);
    let pieces = ((upper / period).ceil() as usize).clamp(1, 4000);
    let h = upper / pieces as f64;
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_intervals: 200,
    };
    let mut total = 0.0;
    for k in 0..pieces {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        total += match integrate(integrand, a, b, opts) {
            Ok(i) => i.value,
            Err(e) => e.value,
        };
    }
    (0.5 - total / PI).clamp(0.0, 1.0)
}

impl StableCdf {
    pub fn new(alpha: f64, beta: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(LabError::InvalidParameter(format!("stable index must lie in (0, 2], got {alpha}")));
        }
        if !(beta.abs() <= 1.0) || !(scale > 0.0) || !scale.is_finite() {
            return Err(LabError::InvalidParameter(format!("need |β| ≤ 1 and scale > 0, got β={beta}, scale={scale}")));
        }
        let step = TABLE_SPAN / TABLE_HALF as f64;
        let xs: Vec<f64> = (0..=2 * TABLE_HALF)
            .map(|i| scale * ((i as f64 - TABLE_HALF as f64) * step).sinh())
            .collect();
        let mut fs = par::map_slice(&xs, |&x| inversion(alpha, beta, scale, x));
        // Quadrature noise can leave tiny dips; a CDF is monotone.
        for i in 1..fs.len() {
            fs[i] = fs[i].max(fs[i - 1]);
        }
        Ok(Self {
            alpha,
            beta,
            scale,
            xs,
            fs,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (first, last) = (self.xs[0], *self.xs.last().unwrap());
        if x <= first {
            return self.fs[0] * (first / x).abs().powf(self.alpha);
        }
        if x >= last {
            let tail = 1.0 - *self.fs.last().unwrap();
            return 1.0 - tail * (last / x).powf(self.alpha);
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.fs[i] + w * (self.fs[i + 1] - self.fs[i])
    }
}

type CacheKey = (u64, u64, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<StableCdf>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<StableCdf>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared tabulated CDF; each parameter triple is computed once per process.
pub fn stable_cdf(alpha: f64, beta: f64, scale: f64) -> Result<Arc<StableCdf>> {
    let key = (alpha.to_bits(), beta.to_bits(), scale.to_bits());
    if let Some(c) = cache().lock().unwrap().get(&key) {
        return Ok(c.clone());
    }
    let c = Arc::new(StableCdf::new(alpha, beta, scale)?);
    Ok(cache().lock().unwrap().entry(key).or_insert(c).clone())
}

/// Two-sided KS distance of `samples` to `S_α(scale, β, 0)`.
pub fn ks_distance_to_stable(samples: &[f64], alpha: f64, scale: f64, skew: f64) -> Result<f64> {
    if samples.len() < 100 {
        return Err(LabError::InvalidParameter(format!(
            "need at least 100 samples, got {}",
            samples.len()
        )));
    }
    let cdf = stable_cdf(alpha, skew, scale)?;
    Ok(ks_statistic(samples, |x| cdf.cdf(x)))
}

/// Limiting law of the rescaled solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum TargetLaw {
    Stable { alpha: f64, beta: f64, scale: f64 },
    Normal { sd: f64 },
}

#[derive(Debug, Clone)]
pub struct DistributionalSpec {
    pub sigma: SigmaMap,
    pub x: f64,
    pub driver: DriverSpec,
    pub f: ScalingFunction,
    pub t_eval: f64,
    pub n: usize,
    pub seed: u64,
    pub target: TargetLaw,
    /// Pass iff the KS distance is at most this.
    pub threshold: f64,
    /// Geometric grid steps (ratio 1/2) below `t_eval`.
    pub steps: usize,
}

/// Simulates `n` scalar solutions to `t_eval` and measures the KS distance
/// of `(X_t − x)/(σ(x) f(t))` to the target law.
pub fn verify_distributional_transfer(spec: &DistributionalSpec) -> Result<ScalingReport> {
    if spec.sigma.n() != 1 || spec.sigma.d() != 1 {
        return Err(LabError::InvalidParameter("distributional transfer is scalar".into()));
    }
    let sx = spec.sigma.eval(&[spec.x])[(0, 0)];
    if sx == 0.0 {
        return Err(LabError::InvalidParameter("σ(x) = 0".into()));
    }
    if spec.n < 100 {
        return Err(LabError::InvalidParameter(format!("need N ≥ 100, got {}", spec.n)));
    }
    let grid = TimeGrid::geometric(spec.t_eval, 0.5, spec.steps.max(1))?;
    let drivers = sample_ensemble(&spec.driver, &grid, spec.seed, spec.n)?;
    let solutions = solve_ensemble(&spec.sigma, &[spec.x], &drivers, Substeps::Auto)?;
    let last = grid.times().len() - 1;
    let scale = sx * spec.f.eval(spec.t_eval)?;
    let samples: Vec<f64> = solutions
        .iter()
        .map(|s| (s.path.grid_value(last)[0] - spec.x) / scale)
        .collect();
    let ks = match &spec.target {
        TargetLaw::Stable { alpha, beta, scale } => ks_distance_to_stable(&samples, *alpha, *scale, *beta)?,
        TargetLaw::Normal { sd } => {
            let law = Normal::new(0.0, *sd).map_err(|e| LabError::InvalidParameter(e.to_string()))?;
            ks_statistic(&samples, |x| law.cdf(x))
        }
    };
    let passed = ks <= spec.threshold;
    let mut r = ScalingReport::new("distributional_transfer", if passed { Verdict::Pass } else { Verdict::Fail });
    r.passed = passed;
    r.scaling = Some(spec.f.describe());
    r.metrics.insert("ks".into(), ks);
    r.metrics.insert("ks_p_value".into(), ks_p_value(ks, samples.len()));
    r.metrics.insert("threshold".into(), spec.threshold);
    r.metrics.insert("t_eval".into(), spec.t_eval);
    r.metrics.insert("sigma_x".into(), sx);
    let zeros = samples.iter().filter(|v| **v == 0.0).count();
    r.metrics.insert("share_exact_zero".into(), zeros as f64 / samples.len() as f64);
    let abs: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    r.per_time = vec![TimeSummary::of(spec.t_eval, &abs)];
    Ok(r)
}
