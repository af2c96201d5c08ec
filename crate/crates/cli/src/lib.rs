//! Config-driven experiment runner behind the `levylab` binary.

pub mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use levylab::lab::{
    cluster_set_estimate, cluster_transfer_test, coupling_gap, estimate_limit, integral_lemma_check, limsup_estimate,
    qv_decay_check, rescale, verify_distributional_transfer, verify_in_probability, DistributionalSpec, LabError,
    LimitOptions, Oracle, ScalingReport, Verdict,
};
use levylab::levy::{ScalingFunction, ShortTimeVerdict};
use levylab::paths::{sample_ensemble, write_paths_csv, ContinuousKind, DriverSpec, PathSkeleton, SkeletonParts};
use levylab::sde::{recover_driver, solve_ensemble, write_solutions_csv, SigmaMap, SolutionPath, Substeps};
use serde::Serialize;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, Target, VerifierConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "LEVYLAB_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "levylab-out";
pub const VERDICTS_HEADER: &str = "verifier,verdict,passed";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// One verifier's outcome as written to `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct VerifierResult {
    pub index: usize,
    pub verifier: String,
    pub label: String,
    pub passed: bool,
    pub report: ScalingReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub all_passed: bool,
    pub results: Vec<VerifierResult>,
}

impl RunReport {
    pub fn failing(&self) -> Vec<String> {
        self.results.iter().filter(|r| !r.passed).map(|r| r.label.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub output_dir: PathBuf,
}

/// Catalog printed by `levylab list`; sorted within each section.
pub fn catalog() -> String {
    let mut s = String::new();
    for (title, names) in [
        ("drivers", config::DRIVERS),
        ("scaling", config::SCALINGS),
        ("sigma", config::SIGMAS),
        ("verifiers", config::VERIFIERS),
    ] {
        s.push_str(title);
        s.push_str(":\n");
        let mut names = names.to_vec();
        names.sort_unstable();
        for n in names {
            s.push_str("  ");
            s.push_str(n);
            s.push('\n');
        }
    }
    s
}

/// Output directory: the environment variable wins over the config.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ExperimentConfig::parse(&text)?)
}

/// Runs a configuration file and writes all outputs.
pub fn run_file(path: &Path) -> Result<RunOutcome, RunError> {
    let cfg = load_config(path)?;
    let dir = output_dir(&cfg);
    run_to(&cfg, &dir)
}

/// Runs `cfg` and writes outputs into `dir`.
pub fn run_to(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, RunError> {
    let (report, dumps) = execute_with_dumps(cfg)?;
    write_outputs(&report, dir)?;
    write_dumps(&dumps, dir)?;
    Ok(RunOutcome {
        report,
        output_dir: dir.to_path_buf(),
    })
}

/// Runs every verifier on a dedicated pool of `cfg.workers` threads.
/// Results do not depend on the worker count.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    Ok(execute_with_dumps(cfg)?.0)
}

/// Ensembles kept for `paths.csv` / `solutions.csv`.
struct Dumps {
    drivers: Option<Vec<PathSkeleton>>,
    solutions: Option<Vec<SolutionPath>>,
}

fn execute_with_dumps(cfg: &ExperimentConfig) -> Result<(RunReport, Dumps), RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| execute_inner(cfg))
}

struct Ensembles {
    spec: DriverSpec,
    sigma: SigmaMap,
    x0: Vec<f64>,
    drivers: Vec<PathSkeleton>,
    solutions: Option<Vec<SolutionPath>>,
    recovered: Option<Vec<PathSkeleton>>,
}

type Selected = (Vec<PathSkeleton>, Vec<f64>, Option<Oracle>);

fn sim<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Simulation(e.to_string())
}

impl Ensembles {
    fn solutions(&mut self) -> Result<&[SolutionPath], RunError> {
        if self.solutions.is_none() {
            self.solutions = Some(solve_ensemble(&self.sigma, &self.x0, &self.drivers, Substeps::Auto).map_err(sim)?);
        }
        Ok(self.solutions.as_deref().unwrap())
    }

    fn recovered(&mut self) -> Result<&[PathSkeleton], RunError> {
        if self.recovered.is_none() {
            let sigma = self.sigma.clone();
            let rec = self
                .solutions()?
                .iter()
                .map(|s| recover_driver(&sigma, s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(sim)?;
            self.recovered = Some(rec);
        }
        Ok(self.recovered.as_deref().unwrap())
    }

    /// Paths, their starting point and the matching oracle.
    fn target(&mut self, target: Target) -> Result<Selected, RunError> {
        let triplet = self.spec.triplet().ok();
        let origin = vec![0.0; self.spec.dim()];
        Ok(match target {
            Target::Driver => (self.drivers.clone(), origin, triplet.map(Oracle::driver)),
            Target::Recovered => (self.recovered()?.to_vec(), origin, triplet.map(Oracle::driver)),
            Target::Solution => {
                let sx = self.sigma.eval(&self.x0);
                let x0 = self.x0.clone();
                let paths = self.solutions()?.iter().map(|s| s.path.clone()).collect();
                (paths, x0, triplet.map(|t| Oracle::solution(t, sx)))
            }
        })
    }
}

fn scaling(cfg: &config::ScalingConfig, spec: &DriverSpec) -> Result<ScalingFunction, RunError> {
    cfg.build(spec).map_err(RunError::Simulation)
}

fn window(w: &Option<[f64; 2]>) -> Option<(f64, f64)> {
    w.map(|[a, b]| (a, b))
}

/// `φ` evaluated along a scalar driver path, keeping its jump structure.
fn integrand_path(p: &PathSkeleton, which: config::Integrand) -> Result<PathSkeleton, RunError> {
    let g = |t: f64, v: &[f64]| -> Vec<f64> {
        match which {
            config::Integrand::Zero => vec![0.0; v.len()],
            config::Integrand::Time => vec![t; v.len()],
            config::Integrand::TimeTimesDriver => v.iter().map(|x| t * x).collect(),
        }
    };
    let continuous = match which {
        config::Integrand::Zero => ContinuousKind::None,
        config::Integrand::Time => ContinuousKind::Linear,
        config::Integrand::TimeTimesDriver => match p.continuous() {
            ContinuousKind::None => ContinuousKind::Linear,
            _ => ContinuousKind::Stochastic,
        },
    };
    PathSkeleton::from_parts(SkeletonParts {
        times: p.times().to_vec(),
        shape: p.shape(),
        origin: g(0.0, p.origin()),
        values: (0..p.len()).flat_map(|i| g(p.times()[i], p.value(i))).collect(),
        grid_indices: p.grid_indices().to_vec(),
        jump_indices: p.jump_indices().to_vec(),
        pre_jump: (0..p.jump_count()).flat_map(|j| g(p.jump_time(j), p.pre_jump(j))).collect(),
        seed_id: p.seed_id(),
        continuous,
    })
    .map_err(sim)
}

fn run_verifier(
    cfg: &ExperimentConfig,
    index: usize,
    v: &VerifierConfig,
    ens: &mut Ensembles,
) -> Result<ScalingReport, RunError> {
    let lab = |e: LabError| RunError::Simulation(e.to_string());
    let seed = cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1));
    match v {
        VerifierConfig::EstimateLimit {
            target,
            scaling: s,
            window: w,
            bootstrap,
        } => {
            let f = scaling(s, &ens.spec)?;
            let (paths, center, oracle) = ens.target(*target)?;
            let re = rescale(&paths, &f, &center).map_err(lab)?;
            let opts = LimitOptions {
                bootstrap: *bootstrap,
                seed,
                window: window(w),
                ..LimitOptions::default()
            };
            estimate_limit(&re, oracle.as_ref(), &opts).map_err(lab)
        }
        VerifierConfig::QvDecay { p, window: w } => qv_decay_check(&ens.drivers, *p, window(w)).map_err(lab),
        VerifierConfig::CouplingGap { scaling: s, window: w } => {
            let f = scaling(s, &ens.spec)?;
            let sols: Vec<PathSkeleton> = ens.solutions()?.iter().map(|s| s.path.clone()).collect();
            coupling_gap(&sols, &ens.drivers, &ens.sigma, &ens.x0, &f, window(w)).map_err(lab)
        }
        VerifierConfig::IntegralLemma { integrand, p, window: w } => {
            let phis = ens
                .drivers
                .iter()
                .map(|d| integrand_path(d, *integrand))
                .collect::<Result<Vec<_>, _>>()?;
            integral_lemma_check(&phis, &ens.drivers, *p, window(w)).map_err(lab)
        }
        VerifierConfig::Limsup {
            target,
            scaling: s,
            decades,
        } => {
            let f = scaling(s, &ens.spec)?;
            let (paths, center, oracle) = ens.target(*target)?;
            let re = rescale(&paths, &f, &center).map_err(lab)?;
            let est = limsup_estimate(&re, *decades).map_err(lab)?;
            let prediction = oracle.and_then(|o| o.predict(&f).ok());
            let predicted = match prediction.as_ref().map(|p| &p.verdict) {
                Some(ShortTimeVerdict::OscillatesLil { limsup, .. }) => Some(*limsup),
                _ => None,
            };
            let mut r = est.report(predicted);
            r.scaling = Some(f.describe());
            r.prediction = prediction;
            Ok(r)
        }
        VerifierConfig::ClusterSet {
            shell,
            scaling: s,
            permutations,
            axis_ratio,
        } => {
            let f = scaling(s, &ens.spec)?;
            let shell = (shell[0], shell[1]);
            let origin = vec![0.0; ens.spec.dim()];
            let driver_re = rescale(&ens.drivers, &f, &origin).map_err(lab)?;
            let sx = ens.sigma.eval(&ens.x0);
            let x0 = ens.x0.clone();
            let sols: Vec<PathSkeleton> = ens.solutions()?.iter().map(|s| s.path.clone()).collect();
            let sol_re = rescale(&sols, &f, &x0).map_err(lab)?;
            let mut r =
                cluster_transfer_test(&sol_re, &driver_re, &sx, shell, *permutations, seed).map_err(lab)?;
            r.verifier = "cluster_set".into();
            let cloud = cluster_set_estimate(&sol_re, shell).map_err(lab)?;
            r.metrics.insert("max_radius".into(), cloud.max_radius);
            for (c, (lo, hi)) in cloud.extents.iter().enumerate() {
                r.metrics.insert(format!("extent_lo_{c}"), *lo);
                r.metrics.insert(format!("extent_hi_{c}"), *hi);
            }
            if let Some(e) = &cloud.ellipse {
                let ratio = e.axis_ratio();
                r.metrics.insert("axis_ratio".into(), ratio);
                r.metrics.insert("semi_axis_major".into(), e.semi_axes[0]);
                r.metrics.insert("semi_axis_minor".into(), e.semi_axes[1]);
                r.metrics.insert("major_axis_angle".into(), e.angle);
                if let Some([lo, hi]) = axis_ratio {
                    let ok = ratio >= *lo && ratio <= *hi;
                    r.agreement = Some(ok);
                    if !ok {
                        r.passed = false;
                        r.verdict = Verdict::Fail;
                        r.notes.push(format!("axis ratio {ratio:.4} outside [{lo}, {hi}]"));
                    }
                }
            } else if axis_ratio.is_some() {
                r.passed = false;
                r.verdict = Verdict::Fail;
                r.notes.push("axis ratio needs a planar solution".into());
            }
            Ok(r)
        }
        VerifierConfig::DistributionalTransfer {
            t_eval,
            scaling: s,
            law,
            threshold,
            steps,
        } => {
            let spec = DistributionalSpec {
                sigma: ens.sigma.clone(),
                x: ens.x0[0],
                driver: ens.spec.clone(),
                f: scaling(s, &ens.spec)?,
                t_eval: *t_eval,
                n: cfg.n_paths,
                seed,
                target: law.clone(),
                threshold: *threshold,
                steps: *steps,
            };
            verify_distributional_transfer(&spec).map_err(lab)
        }
        VerifierConfig::InProbability {
            scaling: s,
            v: limit,
            deltas,
        } => {
            let f = scaling(s, &ens.spec)?;
            if ens.sigma.n() != 1 {
                return Err(RunError::Simulation("in_probability needs a scalar solution".into()));
            }
            let target = ens.sigma.eval(&ens.x0)[(0, 0)] * limit;
            let x0 = ens.x0.clone();
            let sols: Vec<PathSkeleton> = ens.solutions()?.iter().map(|s| s.path.clone()).collect();
            let re = rescale(&sols, &f, &x0).map_err(lab)?;
            verify_in_probability(&re, target, deltas).map_err(lab)
        }
    }
}

fn execute_inner(cfg: &ExperimentConfig) -> Result<(RunReport, Dumps), RunError> {
    let spec = cfg.driver.spec().map_err(RunError::Simulation)?;
    let sigma = cfg.sigma.build().map_err(RunError::Simulation)?;
    let grid = cfg.grid.build().map_err(RunError::Simulation)?;
    let drivers = sample_ensemble(&spec, &grid, cfg.seed, cfg.n_paths).map_err(sim)?;
    let mut ens = Ensembles {
        spec,
        sigma,
        x0: cfg.x0(),
        drivers,
        solutions: None,
        recovered: None,
    };
    let mut results = Vec::with_capacity(cfg.verifiers.len());
    for (i, v) in cfg.verifiers.iter().enumerate() {
        let label = format!("{}#{i}", v.name());
        // A verifier that cannot be evaluated counts as failed.
        let report = match run_verifier(cfg, i, v, &mut ens) {
            Ok(r) => r,
            Err(e) => {
                let mut r = ScalingReport::new(v.name(), Verdict::Fail);
                r.notes.push(format!("error: {e}"));
                r
            }
        };
        results.push(VerifierResult {
            index: i,
            verifier: v.name().to_string(),
            label,
            passed: report.passed,
            report,
        });
    }
    if cfg.write_solutions {
        ens.solutions()?;
    }
    let all_passed = results.iter().all(|r| r.passed);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        all_passed,
        results,
    };
    let dumps = Dumps {
        drivers: cfg.write_paths.then_some(ens.drivers),
        solutions: if cfg.write_solutions { ens.solutions } else { None },
    };
    Ok((report, dumps))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), RunError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|source| RunError::Write {
        path: path.clone(),
        source,
    })?;
    Ok((path, BufWriter::new(f)))
}

fn finish(path: PathBuf, r: io::Result<()>) -> Result<(), RunError> {
    r.map_err(|source| RunError::Write { path, source })
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::ConvergesTo { .. } => "converges_to",
        Verdict::DivergesInNorm => "diverges_in_norm",
        Verdict::Oscillates => "oscillates",
        Verdict::Inconclusive => "inconclusive",
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
    }
}

/// `report.json`, `verdicts.csv` and one `NN_<verifier>.csv` per verifier.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let (path, mut w) = create(dir, "report.json")?;
    finish(path, writeln!(w, "{}", report.to_json()).and_then(|_| w.flush()))?;

    let (path, mut w) = create(dir, "verdicts.csv")?;
    let body = (|| {
        writeln!(w, "{VERDICTS_HEADER}")?;
        for r in &report.results {
            writeln!(w, "{},{},{}", r.label, verdict_name(&r.report.verdict), r.passed)?;
        }
        w.flush()
    })();
    finish(path, body)?;

    for r in &report.results {
        let (path, mut w) = create(dir, &format!("{:02}_{}.csv", r.index, r.verifier))?;
        finish(path, r.report.write_csv(&mut w).and_then(|_| w.flush()))?;
    }

    Ok(())
}

fn write_dumps(dumps: &Dumps, dir: &Path) -> Result<(), RunError> {
    if let Some(drivers) = &dumps.drivers {
        let (path, mut w) = create(dir, "paths.csv")?;
        finish(path, write_paths_csv(&mut w, drivers, Some("driver")).and_then(|_| w.flush()))?;
    }
    if let Some(sols) = &dumps.solutions {
        let (path, mut w) = create(dir, "solutions.csv")?;
        finish(path, write_solutions_csv(&mut w, sols).and_then(|_| w.flush()))?;
    }
    Ok(())
}
