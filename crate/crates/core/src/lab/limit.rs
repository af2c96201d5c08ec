use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LabError, Oracle, RescaledEnsemble, Result, ScalingReport, TimeSummary, Trend, Verdict};
use crate::levy::{ScalingFunction, ShortTimeVerdict};
use crate::par;
use crate::paths::PathSkeleton;
use crate::rng::mix64;
use crate::sde::{realized_covariation, stochastic_integral, SigmaMap, Side};
use crate::stats::{linear_fit, median};

/// Tuning of the convergence rules.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitOptions {
    /// Bootstrap resamples (over paths) for trend intervals.
    pub bootstrap: usize,
    pub seed: u64,
    /// Required ratio of the per-time median at the largest time to that at
    /// the smallest time.
    pub min_decrease: f64,
    /// Median-norm slopes at or below this (in `log t`) count as divergence.
    pub divergence_slope: f64,
    /// Restrict the analysis to times in `[lo, hi]`.
    pub window: Option<(f64, f64)>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            bootstrap: 200,
            seed: 0x6c61_625f_7472_6e64,
            min_decrease: 10.0,
            divergence_slope: -0.1,
            window: None,
        }
    }
}

fn select_median(v: &mut [f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    let (_, hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        return hi;
    }
    let lo = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lo + hi)
}

fn log_slope(times: &[f64], medians: &[f64], floor: f64) -> f64 {
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = medians.iter().map(|m| m.max(floor).ln()).collect();
    linear_fit(&x, &y).0
}

/// Per-time medians of `columns[k][p]` and the log-log trend with a
/// percentile bootstrap interval over paths.
fn trend_of(times: &[f64], columns: &[Vec<f64>], opts: &LimitOptions, name: &str) -> (Vec<f64>, Trend) {
    let medians: Vec<f64> = columns.iter().map(|c| median(c)).collect();
    let top = medians.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        let t = Trend {
            statistic: name.into(),
            slope: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
        };
        return (medians, t);
    }
    let floor = top * 1e-15;
    let slope = log_slope(times, &medians, floor);
    let n = columns[0].len();
    let mut slopes = par::map_indexed(opts.bootstrap, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(opts.seed ^ mix64(b as u64)));
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut buf = vec![0.0; n];
        let meds: Vec<f64> = columns
            .iter()
            .map(|c| {
                for (slot, &i) in buf.iter_mut().zip(&idx) {
                    *slot = c[i];
                }
                select_median(&mut buf)
            })
            .collect();
        log_slope(times, &meds, floor)
    });
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| crate::stats::quantile_sorted(&slopes, p);
    let (ci_low, ci_high) = if slopes.is_empty() { (slope, slope) } else { (q(0.025), q(0.975)) };
    (
        medians,
        Trend {
            statistic: name.into(),
            slope,
            ci_low,
            ci_high,
        },
    )
}

/// Ratio of the median at the largest time to the median at the smallest;
/// `∞` when the latter vanishes.
fn decrease_factor(medians: &[f64]) -> f64 {
    let (small, large) = (medians[0], *medians.last().unwrap());
    if small == 0.0 {
        f64::INFINITY
    } else {
        large / small
    }
}

fn windowed(re: &RescaledEnsemble, window: Option<(f64, f64)>) -> Result<RescaledEnsemble> {
    match window {
        Some((lo, hi)) => re.restrict(lo, hi),
        None => Ok(re.clone()),
    }
}

/// Whether an observed verdict matches a predicted one. `reference` is the
/// median norm at the largest time, the yardstick for "close to zero".
pub(crate) fn agrees(pred: &ShortTimeVerdict, verdict: &Verdict, reference: f64) -> bool {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (pred, verdict) {
        (ShortTimeVerdict::FiniteLimit { limit }, Verdict::ConvergesTo { value }) => {
            let l = norm(limit);
            let diff: Vec<f64> = value.iter().zip(limit).map(|(a, b)| a - b).collect();
            if l > 0.0 {
                norm(&diff) <= 0.05 * l
            } else {
                norm(value) <= 0.1 * reference
            }
        }
        (ShortTimeVerdict::ZeroLimit, Verdict::ConvergesTo { value }) => norm(value) <= 0.1 * reference,
        (ShortTimeVerdict::DivergesInNorm, Verdict::DivergesInNorm) => true,
        (ShortTimeVerdict::OscillatesLil { .. }, Verdict::Oscillates | Verdict::Inconclusive) => true,
        _ => false,
    }
}

/// Classifies the short-time behaviour of a rescaled ensemble.
///
/// Divergence: the median norm grows as `t ↓ 0` with log-log slope at most
/// `divergence_slope` and a bootstrap interval below zero. Convergence: the
/// median distance to `v̂` (componentwise median at the smallest time)
/// shrinks with an interval above zero and by at least `min_decrease`.
pub fn estimate_limit(re: &RescaledEnsemble, oracle: Option<&Oracle>, opts: &LimitOptions) -> Result<ScalingReport> {
    let re = windowed(re, opts.window)?;
    let times = re.times().to_vec();
    if times.len() < 8 {
        return Err(LabError::TooFewTimes {
            needed: 8,
            got: times.len(),
        });
    }
    let norms: Vec<Vec<f64>> = (0..times.len()).map(|k| re.norms_at(k)).collect();
    let v_hat: Vec<f64> = (0..re.dim()).map(|c| median(&re.component_at(0, c))).collect();
    let deviations: Vec<Vec<f64>> = (0..times.len())
        .map(|k| {
            (0..re.n_paths())
                .map(|p| {
                    re.value(p, k)
                        .iter()
                        .zip(&v_hat)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let (norm_medians, norm_trend) = trend_of(&times, &norms, opts, "median norm");
    let (dev_medians, dev_trend) = trend_of(&times, &deviations, opts, "median distance to v̂");
    let factor = decrease_factor(&dev_medians);
    let all_exact = dev_medians.iter().all(|m| *m == 0.0);

    let diverges = norm_trend.slope <= opts.divergence_slope && norm_trend.ci_high < 0.0;
    let verdict = if diverges {
        Verdict::DivergesInNorm
    } else if all_exact {
        Verdict::ConvergesTo { value: v_hat.clone() }
    } else if dev_trend.spans_zero() {
        Verdict::Inconclusive
    } else if dev_trend.ci_low >= 0.0 && dev_trend.slope > 0.0 {
        if factor >= opts.min_decrease {
            Verdict::ConvergesTo { value: v_hat.clone() }
        } else {
            Verdict::Inconclusive
        }
    } else if dev_trend.ci_high <= 0.0 && dev_trend.slope < 0.0 {
        Verdict::Oscillates
    } else {
        Verdict::Inconclusive
    };

    let mut report = ScalingReport::new("estimate_limit", verdict);
    report.scaling = Some(re.scaling().describe());
    report.per_time = times.iter().zip(&norms).map(|(&t, c)| TimeSummary::of(t, c)).collect();
    report.metrics.insert("decrease_factor".into(), factor);
    report.metrics.insert("median_norm_largest_time".into(), *norm_medians.last().unwrap());
    report.metrics.insert("median_norm_smallest_time".into(), norm_medians[0]);
    report.metrics.insert("smallest_time".into(), times[0]);
    for (c, v) in v_hat.iter().enumerate() {
        report.metrics.insert(format!("v_hat_{c}"), *v);
    }
    report.trend = Some(if diverges { norm_trend.clone() } else { dev_trend });
    report.norm_trend = Some(norm_trend);
    if let Some(o) = oracle {
        let pred = o.predict(re.scaling())?;
        let ok = agrees(&pred.verdict, &report.verdict, *norm_medians.last().unwrap());
        report.prediction = Some(pred);
        report.agreement = Some(ok);
        report.passed = ok;
    } else {
        report.passed = report.verdict != Verdict::Inconclusive;
    }
    Ok(report)
}

fn in_window(t: f64, window: Option<(f64, f64)>) -> bool {
    window.is_none_or(|(lo, hi)| t >= lo && t <= hi)
}

/// Grid positions of a path that fall in the window.
fn window_indices(p: &PathSkeleton, window: Option<(f64, f64)>) -> Vec<usize> {
    (0..p.grid_indices().len())
        .filter(|&k| in_window(p.times()[p.grid_indices()[k]], window))
        .collect()
}

/// Report for a per-path, per-time statistic that should shrink under the
/// factor rule. `columns[k]` holds the statistic of every path at time `k`.
fn decrease_report(name: &str, times: &[f64], columns: &[Vec<f64>], min_decrease: f64) -> ScalingReport {
    let medians: Vec<f64> = columns.iter().map(|c| median(c)).collect();
    let factor = if medians.iter().all(|m| *m == 0.0) {
        f64::INFINITY
    } else {
        decrease_factor(&medians)
    };
    let verdict = if factor >= min_decrease {
        Verdict::ConvergesTo { value: vec![0.0] }
    } else if factor <= 1.0 / min_decrease {
        Verdict::DivergesInNorm
    } else {
        Verdict::Inconclusive
    };
    let mut report = ScalingReport::new(name, verdict);
    report.passed = matches!(report.verdict, Verdict::ConvergesTo { .. });
    report.per_time = times.iter().zip(columns).map(|(&t, c)| TimeSummary::of(t, c)).collect();
    report.metrics.insert("decrease_factor".into(), factor);
    if medians.iter().all(|m| *m > 0.0) {
        report
            .metrics
            .insert("log_slope".into(), log_slope(times, &medians, f64::MIN_POSITIVE));
    }
    report
}

fn check_shared_grid(paths: &[PathSkeleton]) -> Result<Vec<f64>> {
    let first = paths
        .first()
        .ok_or_else(|| LabError::InvalidParameter("empty ensemble".into()))?;
    let times = first.grid_times();
    if paths.iter().any(|p| p.grid_times() != times) {
        return Err(LabError::Unpaired("paths do not share one grid".into()));
    }
    Ok(times)
}

/// Transposes per-path rows `rows[p][k]` into per-time columns.
fn columns_of(rows: Vec<Vec<f64>>, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
}

/// Per-time median of `tr [L,L]_t / t^{2p}`; converges when the median
/// falls by the factor rule across the (windowed) grid.
pub fn qv_decay_check(drivers: &[PathSkeleton], p: f64, window: Option<(f64, f64)>) -> Result<ScalingReport> {
    let times = check_shared_grid(drivers)?;
    let keep: Vec<usize> = (0..times.len()).filter(|&k| in_window(times[k], window)).collect();
    if keep.len() < 2 {
        return Err(LabError::TooFewTimes {
            needed: 2,
            got: keep.len(),
        });
    }
    let rows = par::try_map_indexed(drivers.len(), |i| -> Result<Vec<f64>> {
        let l = &drivers[i];
        let q = realized_covariation(l, l)?;
        let d = l.dim();
        Ok(keep
            .iter()
            .map(|&k| {
                let idx = q.times().partition_point(|&t| t < times[k]);
                let v = q.value(idx);
                let trace: f64 = (0..d).map(|c| v[c + c * d]).sum();
                trace / times[k].powf(2.0 * p)
            })
            .collect())
    })?;
    let kept: Vec<f64> = keep.iter().map(|&k| times[k]).collect();
    let mut report = decrease_report("qv_decay", &kept, &columns_of(rows, keep.len()), 10.0);
    report.scaling = Some(format!("t^{}", 2.0 * p));
    report.metrics.insert("p".into(), p);
    Ok(report)
}

/// `‖X_t − x − σ(x)(L_t − L_0)‖/f(t)` on paired solution and driver
/// ensembles, together with the variant using `σ(X_t)`.
pub fn coupling_gap(
    solutions: &[PathSkeleton],
    drivers: &[PathSkeleton],
    sigma: &SigmaMap,
    x: &[f64],
    f: &ScalingFunction,
    window: Option<(f64, f64)>,
) -> Result<ScalingReport> {
    if solutions.len() != drivers.len() {
        return Err(LabError::Unpaired(format!(
            "{} solutions against {} drivers",
            solutions.len(),
            drivers.len()
        )));
    }
    if solutions.len() < 2 {
        return Err(LabError::InvalidParameter("ensemble needs at least two paths".into()));
    }
    let times = check_shared_grid(drivers)?;
    let keep = window_indices(&drivers[0], window);
    if keep.len() < 2 {
        return Err(LabError::TooFewTimes {
            needed: 2,
            got: keep.len(),
        });
    }
    let scale: Vec<f64> = keep.iter().map(|&k| f.eval(times[k])).collect::<std::result::Result<_, _>>()?;
    let sigma_x = sigma.eval(x);
    let rows = par::try_map_indexed(solutions.len(), |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let (s, l) = (&solutions[i], &drivers[i]);
        if s.seed_id() != l.seed_id() || s.grid_times() != times {
            return Err(LabError::Unpaired(format!("pair {i} does not share seed and grid")));
        }
        let l0 = DVector::from_column_slice(l.origin());
        let x0 = DVector::from_column_slice(x);
        let mut fixed = Vec::with_capacity(keep.len());
        let mut moving = Vec::with_capacity(keep.len());
        for (j, &k) in keep.iter().enumerate() {
            let xt = DVector::from_column_slice(s.grid_value(k));
            let dl = DVector::from_column_slice(l.grid_value(k)) - &l0;
            let base = &xt - &x0;
            fixed.push((&base - &sigma_x * &dl).norm() / scale[j]);
            let sigma_t: DMatrix<f64> = sigma.eval(xt.as_slice());
            moving.push((&base - sigma_t * &dl).norm() / scale[j]);
        }
        Ok((fixed, moving))
    })?;
    let kept: Vec<f64> = keep.iter().map(|&k| times[k]).collect();
    let (fixed, moving): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut report = decrease_report("coupling_gap", &kept, &columns_of(fixed, keep.len()), 10.0);
    let variant = decrease_report("coupling_gap_variant", &kept, &columns_of(moving, keep.len()), 10.0);
    let variant_factor = variant.metric("decrease_factor").unwrap();
    report.metrics.insert("variant_decrease_factor".into(), variant_factor);
    if !variant.passed {
        report.verdict = variant.verdict;
        report.passed = false;
    }
    report.scaling = Some(f.describe());
    Ok(report)
}

/// `|t^{−p} ∫₀ᵗ φ_{s−} dX_s|` on paired integrand and driver ensembles.
pub fn integral_lemma_check(
    integrands: &[PathSkeleton],
    drivers: &[PathSkeleton],
    p: f64,
    window: Option<(f64, f64)>,
) -> Result<ScalingReport> {
    if integrands.len() != drivers.len() || drivers.len() < 2 {
        return Err(LabError::Unpaired(format!(
            "{} integrands against {} drivers",
            integrands.len(),
            drivers.len()
        )));
    }
    let times = check_shared_grid(drivers)?;
    let keep = window_indices(&drivers[0], window);
    if keep.len() < 2 {
        return Err(LabError::TooFewTimes {
            needed: 2,
            got: keep.len(),
        });
    }
    let rows = par::try_map_indexed(drivers.len(), |i| -> Result<Vec<f64>> {
        let y = stochastic_integral(&integrands[i], &drivers[i], Side::Left)?;
        Ok(keep
            .iter()
            .map(|&k| {
                let idx = y.times().partition_point(|&t| t < times[k]);
                let norm = y.value(idx).iter().map(|v| v * v).sum::<f64>().sqrt();
                norm / times[k].powf(p)
            })
            .collect())
    })?;
    let kept: Vec<f64> = keep.iter().map(|&k| times[k]).collect();
    let mut report = decrease_report("integral_lemma", &kept, &columns_of(rows, keep.len()), 10.0);
    report.scaling = Some(format!("t^{p}"));
    Ok(report)
}

/// Empirical `P(|R_t − target| > δ)` per time and threshold for a scalar
/// rescaled ensemble. Passes when, for every `δ`, the probabilities do not
/// increase as `t ↓ 0` (non-negative slope in `log t`) and end below 0.05.
pub fn verify_in_probability(re: &RescaledEnsemble, target: f64, deltas: &[f64]) -> Result<ScalingReport> {
    if re.dim() != 1 {
        return Err(LabError::InvalidParameter("in-probability check is scalar".into()));
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(LabError::InvalidParameter("need positive thresholds δ".into()));
    }
    let times = re.times();
    let errors: Vec<Vec<f64>> = (0..times.len())
        .map(|k| re.component_at(k, 0).iter().map(|v| (v - target).abs()).collect())
        .collect();
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let mut passed = true;
    let mut report = ScalingReport::new("in_probability", Verdict::Pass);
    for &delta in deltas {
        let probs: Vec<f64> = errors
            .iter()
            .map(|e| e.iter().filter(|v| **v > delta).count() as f64 / e.len() as f64)
            .collect();
        let slope = if times.len() > 1 { linear_fit(&x, &probs).0 } else { 0.0 };
        let ok = slope >= -1e-12 && probs[0] <= 0.05;
        passed &= ok;
        report.metrics.insert(format!("p_smallest_time[delta={delta}]"), probs[0]);
        report.metrics.insert(format!("p_largest_time[delta={delta}]"), *probs.last().unwrap());
        report.metrics.insert(format!("slope[delta={delta}]"), slope);
    }
    report.verdict = if passed { Verdict::Pass } else { Verdict::Fail };
    report.passed = passed;
    report.scaling = Some(re.scaling().describe());
    report.metrics.insert("target".into(), target);
    report.per_time = times.iter().zip(&errors).map(|(&t, e)| TimeSummary::of(t, e)).collect();
    Ok(report)
}
