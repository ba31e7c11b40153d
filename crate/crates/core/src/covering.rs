//! Covering numbers of point clouds via greedy farthest-point nets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::points::{dist, least_squares, Point};

/// Above this size the distance updates run on the rayon pool.
const PARALLEL_THRESHOLD: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveringMethod {
    GreedyFarthestPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoveringReport {
    pub epsilons: Vec<f64>,
    pub counts: Vec<usize>,
    pub method: CoveringMethod,
}

/// Greedy farthest-point traversal: start at the first point, then keep
/// adding the point farthest from the current centers until every point is
/// within `epsilon`. Returns indices into `points`. Ties go to the lowest
/// index, so the output depends only on the input order.
///
/// The centers are pairwise more than `epsilon` apart, so the count is also
/// an `epsilon`-packing and lies between `N(eps)` and `N(eps / 2)`.
pub fn greedy_epsilon_net(points: &[Point], epsilon: f64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::invalid("cannot cover an empty cloud"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let mut nearest: Vec<f64> = points.iter().map(|p| dist(p, &points[0])).collect();
    let mut centers = vec![0usize];
    loop {
        let (far, far_d) = argmax(&nearest);
        if far_d <= epsilon {
            break;
        }
        centers.push(far);
        let c = &points[far];
        if points.len() >= PARALLEL_THRESHOLD {
            nearest.par_iter_mut().zip(points.par_iter()).for_each(|(n, p)| {
                let d = dist(p, c);
                if d < *n {
                    *n = d;
                }
            });
        } else {
            for (n, p) in nearest.iter_mut().zip(points) {
                let d = dist(p, c);
                if d < *n {
                    *n = d;
                }
            }
        }
    }
    Ok(centers)
}

fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Greedy net sizes at each scale (computed in parallel across scales).
pub fn covering_counts(points: &[Point], epsilons: &[f64]) -> Result<CoveringReport> {
    let counts = epsilons
        .par_iter()
        .map(|&e| greedy_epsilon_net(points, e).map(|c| c.len()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoveringReport {
        epsilons: epsilons.to_vec(),
        counts,
        method: CoveringMethod::GreedyFarthestPoint,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoveringRatio {
    pub epsilon: f64,
    pub n_x0: usize,
    pub n_x: usize,
    pub ratio: f64,
}

/// `N(X0, eps) / N(X, eps)` from matched clouds: `cloud_size` samples of X0
/// and the full group orbit of that same cloud as the sample of X.
pub fn covering_ratio_check<R: Rng>(
    spec: &DomainSpec,
    epsilon: f64,
    cloud_size: usize,
    rng: &mut R,
) -> Result<CoveringRatio> {
    if cloud_size == 0 {
        return Err(Error::invalid("cloud_size must be positive"));
    }
    let cloud0 = spec.sample_x0_cloud(cloud_size, rng);
    let mut cloud = Vec::with_capacity(cloud_size * spec.group().order());
    for p in &cloud0 {
        cloud.extend(spec.group().orbit(p)?);
    }
    let n_x0 = greedy_epsilon_net(&cloud0, epsilon)?.len();
    let n_x = greedy_epsilon_net(&cloud, epsilon)?.len();
    Ok(CoveringRatio {
        epsilon,
        n_x0,
        n_x,
        ratio: n_x0 as f64 / n_x as f64,
    })
}

/// Least-squares slope of `log N(eps)` against `log(1/eps)`.
pub fn dimension_slope(points: &[Point], epsilons: &[f64]) -> Result<f64> {
    let report = covering_counts_checked(points, epsilons)?;
    Ok(slope_of(&report))
}

fn covering_counts_checked(points: &[Point], epsilons: &[f64]) -> Result<CoveringReport> {
    if epsilons.len() < 4 {
        return Err(Error::invalid("need at least 4 scales"));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("scales must be positive"));
    }
    let lo = epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = epsilons.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::invalid("scales must span at least one decade"));
    }
    covering_counts(points, epsilons)
}

pub fn slope_of(report: &CoveringReport) -> f64 {
    let xs: Vec<f64> = report.epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = report.counts.iter().map(|&c| (c as f64).ln()).collect();
    least_squares(&xs, &ys).0
}
