//! Experiment configuration (TOML).

use std::path::PathBuf;

use levylab::lab::TargetLaw;
use levylab::levy::{JumpLaw, LevyMeasure, MomentDomain, ScalingFunction};
use levylab::paths::{shot_noise_stable, DriverSpec, TimeGrid, Truncation};
use levylab::sde::{PolyTrig, Side, SigmaMap};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("configuration error in `{field}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Master seed. Required: runs are never seeded from the clock.
    pub seed: u64,
    pub n_paths: usize,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Execution settings; left out of the report so that outputs do not
    /// depend on them.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_paths: bool,
    #[serde(default)]
    pub write_solutions: bool,
    pub driver: DriverConfig,
    pub sigma: SigmaConfig,
    pub grid: GridConfig,
    #[serde(rename = "verifier")]
    pub verifiers: Vec<VerifierConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StableSampler {
    /// Chambers–Mallows–Stuck increments on the grid.
    #[default]
    Cms,
    /// Truncated shot-noise series with explicit jumps.
    ShotNoise,
}

fn one() -> f64 {
    1.0
}

fn default_covariance() -> Vec<Vec<f64>> {
    vec![vec![1.0]]
}

fn default_delta() -> f64 {
    0.1
}

fn default_eps() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    Brownian {
        #[serde(default = "default_covariance")]
        covariance: Vec<Vec<f64>>,
        #[serde(default)]
        drift: Option<Vec<f64>>,
    },
    CompoundPoisson {
        rate: f64,
        jumps: JumpLaw,
        #[serde(default)]
        drift: Option<Vec<f64>>,
    },
    Stable {
        alpha: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        drift: f64,
        #[serde(default)]
        sampler: StableSampler,
        /// Relative truncation for the shot-noise sampler.
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Lévy density `e^{−|x|}` on `[−1, 1]`.
    TruncatedExponential {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Deterministic {
        drift: Vec<f64>,
    },
}

impl DriverConfig {
    pub fn spec(&self) -> Result<DriverSpec, String> {
        Ok(match self {
            DriverConfig::Brownian { covariance, drift } => {
                let a = matrix(covariance)?;
                let d = a.nrows();
                DriverSpec::Brownian {
                    covariance: a,
                    drift: drift.clone().unwrap_or(vec![0.0; d]),
                }
            }
            DriverConfig::CompoundPoisson { rate, jumps, drift } => DriverSpec::CompoundPoisson {
                rate: *rate,
                law: jumps.clone(),
                drift: drift.clone().unwrap_or(vec![0.0; jumps.dim()]),
            },
            DriverConfig::Stable {
                alpha,
                beta,
                scale,
                drift,
                sampler,
                delta,
            } => match sampler {
                StableSampler::Cms => DriverSpec::Stable {
                    alpha: *alpha,
                    beta: *beta,
                    scale: *scale,
                    drift: *drift,
                },
                StableSampler::ShotNoise => {
                    if *drift != 0.0 {
                        return Err("the shot-noise sampler has no drift option".into());
                    }
                    let (cp, cm) = levylab::paths::stable_density_constants(*alpha, *beta, *scale);
                    shot_noise_stable(*alpha, cp, cm, *delta).map_err(|e| e.to_string())?
                }
            },
            DriverConfig::TruncatedExponential { eps } => DriverSpec::Truncated {
                measure: LevyMeasure::TruncatedExponential,
                truncation: Truncation::Fixed { eps: *eps },
                correction: None,
                location: vec![0.0],
            },
            DriverConfig::Deterministic { drift } => DriverSpec::Deterministic { drift: drift.clone() },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaConfig {
    Identity {
        n: usize,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// `base + Σ_j x_j slopes[j]`.
    Affine {
        base: Vec<Vec<f64>>,
        slopes: Vec<Vec<Vec<f64>>>,
    },
    /// `a + b sin x` (scalar); the default is `2 + sin x`.
    #[serde(alias = "2+sin")]
    SinShift {
        #[serde(default = "two")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
    },
    /// `diag(base_i + amp_i sin x_i)`.
    #[serde(alias = "diag")]
    DiagSin {
        base: Vec<f64>,
        amp: Vec<f64>,
    },
    /// Bilinear coefficient of a stochastic exponential on `dim×dim` matrices.
    Exponential {
        dim: usize,
        #[serde(default = "left")]
        side: Side,
    },
    PolyTrig {
        constant: Vec<Vec<f64>>,
        linear: Vec<Vec<Vec<f64>>>,
        sine: Vec<Vec<Vec<f64>>>,
        cosine: Vec<Vec<Vec<f64>>>,
    },
}

fn two() -> f64 {
    2.0
}

fn left() -> Side {
    Side::Left
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err("matrices are non-empty lists of equally long rows".into());
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn matrices(list: &[Vec<Vec<f64>>]) -> Result<Vec<DMatrix<f64>>, String> {
    list.iter().map(|m| matrix(m)).collect()
}

impl SigmaConfig {
    pub fn build(&self) -> Result<SigmaMap, String> {
        let r = match self {
            SigmaConfig::Identity { n } => SigmaMap::identity(*n),
            SigmaConfig::Constant { matrix: m } => SigmaMap::constant(matrix(m)?),
            SigmaConfig::Affine { base, slopes } => SigmaMap::affine(matrix(base)?, matrices(slopes)?),
            SigmaConfig::SinShift { a, b } => SigmaMap::sin_shift(*a, *b),
            SigmaConfig::DiagSin { base, amp } => SigmaMap::diag_sin(base.clone(), amp.clone()),
            SigmaConfig::Exponential { dim, side } => SigmaMap::exponential(*dim, *side),
            SigmaConfig::PolyTrig {
                constant,
                linear,
                sine,
                cosine,
            } => SigmaMap::poly_trig(PolyTrig {
                constant: matrix(constant)?,
                linear: matrices(linear)?,
                sine: matrices(sine)?,
                cosine: matrices(cosine)?,
            }),
        };
        r.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: f64,
    pub theta: f64,
    /// Number of ratio steps `K` (times `t_max·θ^k, k = 0..=K`).
    #[serde(default)]
    pub steps: Option<usize>,
    /// Alternatively, the smallest time to reach.
    #[serde(default)]
    pub t_min: Option<f64>,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid, String> {
        let g = match (self.steps, self.t_min) {
            (Some(k), None) => TimeGrid::geometric(self.t_max, self.theta, k),
            (None, Some(t)) => TimeGrid::geometric_to(self.t_max, self.theta, t),
            _ => return Err("give exactly one of `steps` and `t_min`".into()),
        };
        g.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalingConfig {
    Power {
        p: f64,
        #[serde(default = "one")]
        factor: f64,
    },
    Khintchine {
        #[serde(default = "one")]
        factor: f64,
    },
    /// `√(t·(A + ∫_{[−1,1]} x² ν(dx)))` for a scalar driver.
    MatchedNormal,
}

impl ScalingConfig {
    pub fn build(&self, driver: &DriverSpec) -> Result<ScalingFunction, String> {
        let f = match self {
            ScalingConfig::Power { p, factor } => ScalingFunction::power(*p).map_err(|e| e.to_string())?.scaled(*factor),
            ScalingConfig::Khintchine { factor } => ScalingFunction::Khintchine.scaled(*factor),
            ScalingConfig::MatchedNormal => {
                let t = driver.triplet().map_err(|e| e.to_string())?;
                if t.dim() != 1 {
                    return Err("matched_normal needs a scalar driver".into());
                }
                let m2 = t
                    .measure
                    .moment_integral(2.0, MomentDomain::Symmetric)
                    .map_err(|e| e.to_string())?
                    .value;
                ScalingFunction::Power(0.5).scaled((t.gaussian[(0, 0)] + m2).sqrt())
            }
        };
        Ok(match f {
            ScalingFunction::Scaled { factor: 1.0, inner } => *inner,
            f => f,
        })
    }
}

fn khintchine() -> ScalingConfig {
    ScalingConfig::Khintchine { factor: 1.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Driver,
    #[default]
    Solution,
    /// Driver reconstructed from the solution.
    Recovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    Zero,
    /// `φ_s = s`.
    Time,
    /// `φ_s = s·L_s`.
    TimeTimesDriver,
}

fn default_bootstrap() -> usize {
    200
}

fn default_decades() -> f64 {
    6.0
}

fn default_permutations() -> usize {
    199
}

fn default_steps() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum VerifierConfig {
    EstimateLimit {
        #[serde(default)]
        target: Target,
        scaling: ScalingConfig,
        #[serde(default)]
        window: Option<[f64; 2]>,
        #[serde(default = "default_bootstrap")]
        bootstrap: usize,
    },
    QvDecay {
        p: f64,
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    CouplingGap {
        scaling: ScalingConfig,
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    IntegralLemma {
        integrand: Integrand,
        p: f64,
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    Limsup {
        #[serde(default)]
        target: Target,
        #[serde(default = "khintchine")]
        scaling: ScalingConfig,
        #[serde(default = "default_decades")]
        decades: f64,
    },
    ClusterSet {
        shell: [f64; 2],
        #[serde(default = "khintchine")]
        scaling: ScalingConfig,
        #[serde(default = "default_permutations")]
        permutations: usize,
        /// Accepted range of the solution cloud's ellipse axis ratio.
        #[serde(default)]
        axis_ratio: Option<[f64; 2]>,
    },
    DistributionalTransfer {
        t_eval: f64,
        scaling: ScalingConfig,
        law: TargetLaw,
        threshold: f64,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    InProbability {
        scaling: ScalingConfig,
        /// Driver limit `v`; the solution target is `σ(x)v`.
        v: f64,
        deltas: Vec<f64>,
    },
}

impl VerifierConfig {
    pub fn name(&self) -> &'static str {
        match self {
            VerifierConfig::EstimateLimit { .. } => "estimate_limit",
            VerifierConfig::QvDecay { .. } => "qv_decay",
            VerifierConfig::CouplingGap { .. } => "coupling_gap",
            VerifierConfig::IntegralLemma { .. } => "integral_lemma",
            VerifierConfig::Limsup { .. } => "limsup",
            VerifierConfig::ClusterSet { .. } => "cluster_set",
            VerifierConfig::DistributionalTransfer { .. } => "distributional_transfer",
            VerifierConfig::InProbability { .. } => "in_probability",
        }
    }

    /// Whether the verifier consumes the solution ensemble.
    pub fn needs_solutions(&self) -> bool {
        match self {
            VerifierConfig::EstimateLimit { target, .. } | VerifierConfig::Limsup { target, .. } => {
                *target != Target::Driver
            }
            VerifierConfig::QvDecay { .. } | VerifierConfig::IntegralLemma { .. } => false,
            VerifierConfig::DistributionalTransfer { .. } => false,
            _ => true,
        }
    }
}

pub const DRIVERS: &[&str] = &["brownian", "compound_poisson", "deterministic", "stable", "truncated_exponential"];
pub const SIGMAS: &[&str] = &["affine", "constant", "diag_sin", "exponential", "identity", "poly_trig", "sin_shift"];
pub const SCALINGS: &[&str] = &["khintchine", "matched_normal", "power"];
pub const VERIFIERS: &[&str] = &[
    "cluster_set",
    "coupling_gap",
    "distributional_transfer",
    "estimate_limit",
    "in_probability",
    "integral_lemma",
    "limsup",
    "qv_decay",
];

/// 1-based line of `key = …` inside `[table]` (or `[[table]]` number
/// `index`), or of the header itself when the key is absent.
fn locate(text: &str, table: Option<(&str, usize)>, key: Option<&str>) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut seen = std::collections::HashMap::<String, usize>::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            let k = seen.entry(name.clone()).or_insert(0);
            let idx = *k;
            *k += 1;
            current = Some(format!("{name}#{idx}"));
            if let Some((t, n)) = table {
                if name == t && idx == n {
                    header_line = Some(i + 1);
                }
            }
            continue;
        }
        let here = match (&current, table) {
            (None, None) => true,
            (Some(c), Some((t, n))) => *c == format!("{t}#{n}"),
            _ => false,
        };
        if let (true, Some(key)) = (here, key) {
            let lhs = line.split('=').next().unwrap_or("").trim();
            if line.contains('=') && lhs == key {
                return Some(i + 1);
            }
        }
    }
    header_line
}

fn err(text: &str, table: Option<(&str, usize)>, key: Option<&str>, message: impl Into<String>) -> ConfigError {
    let field = match (table, key) {
        (Some((t, 0)), Some(k)) if t != "verifier" => format!("{t}.{k}"),
        (Some((t, n)), Some(k)) => format!("{t}[{n}].{k}"),
        (Some((t, 0)), None) if t != "verifier" => t.to_string(),
        (Some((t, n)), None) => format!("{t}[{n}]"),
        (None, Some(k)) => k.to_string(),
        (None, None) => "<root>".into(),
    };
    ConfigError {
        field,
        line: locate(text, table, key),
        message: message.into(),
    }
}

fn field_of(message: &str) -> String {
    for marker in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(rest) = message.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "<document>".into()
}

impl ExperimentConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            let message = e.message().to_string();
            ConfigError {
                field: field_of(&message),
                line,
                message,
            }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn validate(&self, text: &str) -> Result<(), ConfigError> {
        if self.n_paths < 2 {
            return Err(err(text, None, Some("n_paths"), format!("need at least 2 paths, got {}", self.n_paths)));
        }
        if self.workers == Some(0) {
            return Err(err(text, None, Some("workers"), "worker count must be positive"));
        }
        if self.verifiers.is_empty() {
            return Err(err(text, None, None, "select at least one [[verifier]]"));
        }
        let spec = self.driver.spec().map_err(|m| err(text, Some(("driver", 0)), None, m))?;
        spec.validate().map_err(|e| err(text, Some(("driver", 0)), None, e.to_string()))?;
        let sigma = self.sigma.build().map_err(|m| err(text, Some(("sigma", 0)), None, m))?;
        self.grid.build().map_err(|m| err(text, Some(("grid", 0)), None, m))?;
        if sigma.d() != spec.dim() {
            return Err(err(
                text,
                Some(("sigma", 0)),
                None,
                format!("σ takes a {}-dimensional driver, the driver has dimension {}", sigma.d(), spec.dim()),
            ));
        }
        let x0 = self.x0();
        if x0.len() != sigma.n() {
            return Err(err(text, None, Some("x0"), format!("x0 needs {} entries, got {}", sigma.n(), x0.len())));
        }
        for (i, v) in self.verifiers.iter().enumerate() {
            let at = Some(("verifier", i));
            let check_window = |w: &Option<[f64; 2]>| match w {
                Some([lo, hi]) if !(lo < hi) => Err(err(text, at, Some("window"), "window needs lo < hi")),
                _ => Ok(()),
            };
            match v {
                VerifierConfig::EstimateLimit { scaling, window, .. } | VerifierConfig::CouplingGap { scaling, window } => {
                    check_window(window)?;
                    scaling.build(&spec).map_err(|m| err(text, at, Some("scaling"), m))?;
                }
                VerifierConfig::QvDecay { window, .. } | VerifierConfig::IntegralLemma { window, .. } => {
                    check_window(window)?
                }
                VerifierConfig::Limsup { scaling, .. } | VerifierConfig::InProbability { scaling, .. } => {
                    scaling.build(&spec).map_err(|m| err(text, at, Some("scaling"), m))?;
                }
                VerifierConfig::ClusterSet { shell, scaling, .. } => {
                    if !(shell[0] < shell[1]) {
                        return Err(err(text, at, Some("shell"), "shell needs lo < hi"));
                    }
                    scaling.build(&spec).map_err(|m| err(text, at, Some("scaling"), m))?;
                }
                VerifierConfig::DistributionalTransfer { scaling, t_eval, .. } => {
                    if !(*t_eval > 0.0) {
                        return Err(err(text, at, Some("t_eval"), "t_eval must be positive"));
                    }
                    scaling.build(&spec).map_err(|m| err(text, at, Some("scaling"), m))?;
                }
            }
            if v.needs_solutions() || matches!(v, VerifierConfig::DistributionalTransfer { .. }) {
                let recovered = matches!(
                    v,
                    VerifierConfig::EstimateLimit { target: Target::Recovered, .. }
                        | VerifierConfig::Limsup { target: Target::Recovered, .. }
                );
                if recovered && sigma.n() != sigma.d() {
                    return Err(err(text, at, Some("target"), "driver recovery needs a square σ"));
                }
            }
        }
        Ok(())
    }

    /// Starting point; zeros unless given.
    pub fn x0(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| {
            let n = self.sigma.build().map(|s| s.n()).unwrap_or(1);
            match &self.sigma {
                // a stochastic exponential starts at the identity
                SigmaConfig::Exponential { dim, .. } => DMatrix::<f64>::identity(*dim, *dim).as_slice().to_vec(),
                _ => vec![0.0; n],
            }
        })
    }
}
