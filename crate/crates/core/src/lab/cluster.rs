use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{LabError, RescaledEnsemble, Result, ScalingReport, TimeSummary, Verdict};
use crate::stats::{energy_distance_test, median, quantile};

/// Per-path running maxima of the rescaled norm over the last `decades`
/// decades of the grid, and their ensemble summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimsupEstimate {
    /// Median over paths of the final running maximum.
    pub estimate: f64,
    pub q25: f64,
    pub q75: f64,
    /// Final running maximum of each path.
    pub per_path: Vec<f64>,
    pub window: (f64, f64),
    /// Running maximum over `t ≤ t_k` per window time, summarised over paths.
    pub per_time: Vec<TimeSummary>,
}

impl LimsupEstimate {
    /// Report with agreement against a predicted limsup `c`: the estimate
    /// must fall in `[0.7c, 1.05c]`.
    pub fn report(&self, predicted: Option<f64>) -> ScalingReport {
        let mut r = ScalingReport::new("limsup", Verdict::Oscillates);
        r.per_time = self.per_time.clone();
        r.metrics.insert("limsup_estimate".into(), self.estimate);
        r.metrics.insert("limsup_q25".into(), self.q25);
        r.metrics.insert("limsup_q75".into(), self.q75);
        r.metrics.insert("window_lo".into(), self.window.0);
        r.metrics.insert("window_hi".into(), self.window.1);
        match predicted {
            Some(c) => {
                let ok = self.estimate >= 0.7 * c && self.estimate <= 1.05 * c;
                r.metrics.insert("predicted_limsup".into(), c);
                r.agreement = Some(ok);
                r.passed = ok;
            }
            None => r.passed = self.estimate.is_finite(),
        }
        r
    }
}

pub const LIMSUP_DECADES: f64 = 6.0;

/// Limsup estimate from per-path running maxima. The grid must have at
/// least 20 times spanning at least `decades` decades; only its smallest
/// `decades` decades enter, since the normaliser is far from its asymptotic
/// regime at large `t`.
pub fn limsup_estimate(re: &RescaledEnsemble, decades: f64) -> Result<LimsupEstimate> {
    let times = re.times();
    if times.len() < 20 {
        return Err(LabError::TooFewTimes {
            needed: 20,
            got: times.len(),
        });
    }
    let (t_min, t_max) = (times[0], *times.last().unwrap());
    let span = (t_max / t_min).log10();
    if span < decades * (1.0 - 1e-9) {
        return Err(LabError::ShortGrid(format!(
            "grid spans {span:.2} decades, need {decades}"
        )));
    }
    let hi = t_min * 10f64.powf(decades) * (1.0 + 1e-9);
    let keep: Vec<usize> = (0..times.len()).filter(|&k| times[k] <= hi).collect();
    let running: Vec<Vec<f64>> = (0..re.n_paths())
        .map(|p| {
            let mut m = 0.0f64;
            keep.iter()
                .map(|&k| {
                    m = m.max(re.norm(p, k));
                    m
                })
                .collect()
        })
        .collect();
    let per_path: Vec<f64> = running.iter().map(|r| *r.last().unwrap()).collect();
    let per_time = keep
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let col: Vec<f64> = running.iter().map(|r| r[j]).collect();
            TimeSummary::of(times[k], &col)
        })
        .collect();
    Ok(LimsupEstimate {
        estimate: median(&per_path),
        q25: quantile(&per_path, 0.25),
        q75: quantile(&per_path, 0.75),
        per_path,
        window: (t_min, times[*keep.last().unwrap()]),
        per_time,
    })
}

/// Best-fit ellipse of a planar cloud: semi-axes `2√λ` of the sample
/// covariance, major first, and the major axis angle in radians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub angle: f64,
}

impl Ellipse {
    pub fn axis_ratio(&self) -> f64 {
        self.semi_axes[0] / self.semi_axes[1]
    }
}

/// Pooled rescaled points in a time shell with summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub dim: usize,
    pub shell: (f64, f64),
    pub points: Vec<Vec<f64>>,
    /// Per-coordinate `(min, max)`.
    pub extents: Vec<(f64, f64)>,
    pub max_radius: f64,
    /// Convex hull vertices in counter-clockwise order (d = 1: the two
    /// interval ends; d = 2: polygon). Empty for d ≥ 3.
    pub hull: Vec<Vec<f64>>,
    pub ellipse: Option<Ellipse>,
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain.
fn convex_hull(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<&Vec<f64>> = points.iter().collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts.into_iter().cloned().collect();
    }
    let mut hull: Vec<&Vec<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &&Vec<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().cloned().collect()
}

fn fit_ellipse(points: &[Vec<f64>]) -> Ellipse {
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut cov = DMatrix::zeros(2, 2);
    for p in points {
        let d = DVector::from_vec(vec![p[0] - mean[0], p[1] - mean[1]]);
        cov += &d * d.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let v = eig.eigenvectors.column(major);
    let mut angle = v[1].atan2(v[0]);
    if angle < 0.0 {
        angle += std::f64::consts::PI;
    }
    Ellipse {
        center: mean,
        semi_axes: [
            2.0 * eig.eigenvalues[major].max(0.0).sqrt(),
            2.0 * eig.eigenvalues[minor].max(0.0).sqrt(),
        ],
        angle,
    }
}

/// Pools rescaled points with `t` in `[lo, hi]` across paths.
pub fn cluster_set_estimate(re: &RescaledEnsemble, shell: (f64, f64)) -> Result<ClusterSet> {
    let (lo, hi) = shell;
    let keep: Vec<usize> = (0..re.times().len())
        .filter(|&k| re.times()[k] >= lo && re.times()[k] <= hi)
        .collect();
    if keep.is_empty() {
        return Err(LabError::EmptyShell { lo, hi });
    }
    let d = re.dim();
    let points: Vec<Vec<f64>> = (0..re.n_paths())
        .flat_map(|p| keep.iter().map(move |&k| (p, k)))
        .map(|(p, k)| re.value(p, k).to_vec())
        .collect();
    let extents = (0..d)
        .map(|c| {
            points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[c]), b.max(p[c])))
        })
        .collect::<Vec<_>>();
    let max_radius = points
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let (hull, ellipse) = match d {
        1 => (vec![vec![extents[0].0], vec![extents[0].1]], None),
        2 => (convex_hull(&points), Some(fit_ellipse(&points))),
        _ => (Vec::new(), None),
    };
    Ok(ClusterSet {
        dim: d,
        shell,
        points,
        extents,
        max_radius,
        hull,
        ellipse,
    })
}

/// One shell point per path: path `p` contributes its value at shell time
/// `p mod (shell size)`, so points from different paths are independent.
fn shell_sample(re: &RescaledEnsemble, shell: (f64, f64)) -> Result<Vec<Vec<f64>>> {
    let keep: Vec<usize> = (0..re.times().len())
        .filter(|&k| re.times()[k] >= shell.0 && re.times()[k] <= shell.1)
        .collect();
    if keep.is_empty() {
        return Err(LabError::EmptyShell { lo: shell.0, hi: shell.1 });
    }
    Ok((0..re.n_paths())
        .map(|p| re.value(p, keep[p % keep.len()]).to_vec())
        .collect())
}

/// Energy-distance test between the solution shell cloud and `σ(x)` times
/// the driver shell cloud. Passes when the permutation p-value exceeds 0.01.
pub fn cluster_transfer_test(
    solution: &RescaledEnsemble,
    driver: &RescaledEnsemble,
    sigma_x: &DMatrix<f64>,
    shell: (f64, f64),
    permutations: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if sigma_x.nrows() != solution.dim() || sigma_x.ncols() != driver.dim() {
        return Err(LabError::InvalidParameter(format!(
            "σ(x) is {}×{}, ensembles have dimensions {} and {}",
            sigma_x.nrows(),
            sigma_x.ncols(),
            solution.dim(),
            driver.dim()
        )));
    }
    let a = shell_sample(solution, shell)?;
    let b: Vec<Vec<f64>> = shell_sample(driver, shell)?
        .into_iter()
        .map(|v| (sigma_x * DVector::from_vec(v)).as_slice().to_vec())
        .collect();
    let test = energy_distance_test(&a, &b, permutations, seed);
    let passed = test.p_value > 0.01;
    let mut r = ScalingReport::new("cluster_transfer", if passed { Verdict::Pass } else { Verdict::Fail });
    r.passed = passed;
    r.scaling = Some(solution.scaling().describe());
    r.metrics.insert("energy_statistic".into(), test.statistic);
    r.metrics.insert("p_value".into(), test.p_value);
    r.metrics.insert("shell_lo".into(), shell.0);
    r.metrics.insert("shell_hi".into(), shell.1);
    let radii: Vec<f64> = a.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    r.per_time = vec![TimeSummary::of(shell.1, &radii)];
    Ok(r)
}
