use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ReluNet;
use crate::error::{Error, Result};
use crate::measure::{merge_atoms, MERGE_TOL};
use crate::points::{dist, Point};

/// One-dimensional latent distribution feeding the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceDistribution {
    Uniform { lo: f64, hi: f64 },
}

impl Default for SourceDistribution {
    fn default() -> Self {
        SourceDistribution::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl SourceDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SourceDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    /// Inverse CDF on `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            SourceDistribution::Uniform { lo, hi } => lo + (hi - lo) * u,
        }
    }
}

/// Continuous piecewise-linear `R -> R^d`: constant `x_0` left of the first
/// breakpoint, a linear ramp from `x_{i-1}` to `x_i` on
/// `[z_{i-1/2}, z_i]`, and a plateau at `x_i` on `[z_i, z_{i+1/2}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap {
    /// `z_{1/2}, z_1, z_{3/2}, ..., z_m` (length `2m`).
    breakpoints: Vec<f64>,
    targets: Vec<Point>,
    /// Source mass sent to each target point.
    masses: Vec<f64>,
}

impl TransportMap {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn targets(&self) -> &[Point] {
        &self.targets
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn eval(&self, z: f64) -> Point {
        let b = &self.breakpoints;
        if b.is_empty() {
            return self.targets[0].clone();
        }
        // number of breakpoints <= z
        let k = b.partition_point(|&t| t <= z);
        if k == 0 {
            return self.targets[0].clone();
        }
        if k % 2 == 0 {
            // plateau of target k/2 (or the right tail)
            return self.targets[k / 2].clone();
        }
        let i = (k + 1) / 2;
        let (lo, hi) = (b[k - 1], b[k]);
        let t = (z - lo) / (hi - lo);
        self.targets[i - 1]
            .iter()
            .zip(&self.targets[i])
            .map(|(a, c)| a + t * (c - a))
            .collect()
    }

    /// A latent value mapped exactly to `targets[i]`, inside an interval of
    /// positive source mass.
    pub fn plateau_midpoint(&self, i: usize) -> f64 {
        let b = &self.breakpoints;
        let m = self.targets.len() - 1;
        if m == 0 {
            return 0.0;
        }
        if i == 0 {
            b[0] - 1.0
        } else if i == m {
            b[2 * m - 1] + 1.0
        } else {
            0.5 * (b[2 * i - 1] + b[2 * i])
        }
    }

    /// Exact one-hidden-layer realization
    /// `x_0 + sum_j (s_j - s_{j-1}) relu(z - b_j)`.
    pub fn to_relu_net(&self) -> Result<ReluNet> {
        let d = self.dim();
        let b = &self.breakpoints;
        if b.is_empty() {
            return ReluNet::from_layers(&[1, d], &[(vec![0.0; d], self.targets[0].clone())], None);
        }
        let h = b.len();
        let mut slopes = vec![vec![0.0; d]; h + 1];
        for k in 1..h {
            if k % 2 == 1 {
                let i = (k + 1) / 2;
                let len = b[k] - b[k - 1];
                for c in 0..d {
                    slopes[k][c] = (self.targets[i][c] - self.targets[i - 1][c]) / len;
                }
            }
        }
        let w0 = vec![1.0; h];
        let b0: Vec<f64> = b.iter().map(|z| -z).collect();
        let mut w1 = vec![0.0; d * h];
        for j in 0..h {
            for c in 0..d {
                w1[c * h + j] = slopes[j + 1][c] - slopes[j][c];
            }
        }
        ReluNet::from_layers(&[1, h, d], &[(w0, b0), (w1, self.targets[0].clone())], None)
    }
}

/// Transport map for the uniform empirical measure on `points`; duplicates
/// are merged first.
pub fn build_transport_map(
    points: &[Point],
    source_quantile: impl Fn(f64) -> f64,
    epsilon: f64,
) -> Result<TransportMap> {
    if points.is_empty() {
        return Err(Error::invalid("need at least one target point"));
    }
    let w = vec![1.0 / points.len() as f64; points.len()];
    build_transport_map_weighted(points, &w, source_quantile, epsilon)
}

/// Weighted version: atom `i` receives source mass `w_i`, of which
/// `epsilon / (m |x_i - x_{i-1}|)` is spread along the ramp into it.
pub fn build_transport_map_weighted(
    points: &[Point],
    weights: &[f64],
    source_quantile: impl Fn(f64) -> f64,
    epsilon: f64,
) -> Result<TransportMap> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::invalid("points and weights must be nonempty and aligned"));
    }
    let (targets, masses) = merge_atoms(points, weights, MERGE_TOL);
    let m = targets.len() - 1;
    if m == 0 {
        return Ok(TransportMap {
            breakpoints: Vec::new(),
            targets,
            masses,
        });
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let mut ramps = Vec::with_capacity(m);
    for i in 1..=m {
        let gap = dist(&targets[i], &targets[i - 1]);
        let ramp = epsilon / (m as f64 * gap);
        if !(ramp < masses[i]) {
            return Err(Error::invalid(format!(
                "epsilon {epsilon} too large for atom {i}: needs < {}",
                m as f64 * masses[i] * gap
            )));
        }
        ramps.push(ramp);
    }
    let mut cum = masses[0];
    let mut breakpoints = Vec::with_capacity(2 * m);
    breakpoints.push(source_quantile(cum));
    for i in 1..=m {
        cum += ramps[i - 1];
        breakpoints.push(source_quantile(cum));
        if i < m {
            cum += masses[i] - ramps[i - 1];
            breakpoints.push(source_quantile(cum));
        }
    }
    if breakpoints.iter().any(|z| !z.is_finite()) || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("source quantile is not strictly increasing on the required masses"));
    }
    Ok(TransportMap {
        breakpoints,
        targets,
        masses,
    })
}

/// Supremum of the admissible `epsilon` for these atoms (after merging):
/// `min_i m w_i |x_i - x_{i-1}|`. Infinite for a single atom.
pub fn epsilon_limit(points: &[Point], weights: &[f64]) -> Result<f64> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::invalid("points and weights must be nonempty and aligned"));
    }
    let (targets, masses) = merge_atoms(points, weights, MERGE_TOL);
    let m = (targets.len() - 1) as f64;
    Ok((1..targets.len())
        .map(|i| m * masses[i] * dist(&targets[i], &targets[i - 1]))
        .fold(f64::INFINITY, f64::min))
}

/// Whether `n` breakpoints fit a width `w`, depth `l` ReLU net in `R^d`:
/// `w >= 7d + 1`, `l >= 2` and
/// `n <= (w - d - 1)/2 * floor((w - d - 1)/(6d)) * floor(l/2) + 2`.
pub fn transport_capacity_check(w: usize, l: usize, n: usize, d: usize) -> bool {
    if d == 0 || w < 7 * d + 1 || l < 2 {
        return false;
    }
    let free = (w - d - 1) as f64;
    let cap = free / 2.0 * ((w - d - 1) / (6 * d)) as f64 * (l / 2) as f64 + 2.0;
    n as f64 <= cap
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_breakpoints() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let map = build_transport_map(&pts, |u| u, 0.1).unwrap();
        let b = map.breakpoints();
        assert!((b[0] - 0.5).abs() <= 1e-15);
        assert!((b[1] - 0.6).abs() <= 1e-15);
        assert_eq!(map.eval(0.2), vec![0.0, 0.0]);
        assert_eq!(map.eval(0.9), vec![1.0, 0.0]);
        let mid = map.eval(0.55);
        assert!((mid[0] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn epsilon_limit_is_sharp() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let w = vec![0.5, 0.25, 0.25];
        let lim = epsilon_limit(&pts, &w).unwrap();
        assert!((lim - 0.5).abs() <= 1e-15);
        assert!(build_transport_map_weighted(&pts, &w, |u| u, 0.99 * lim).is_ok());
        assert!(build_transport_map_weighted(&pts, &w, |u| u, lim).is_err());
        assert_eq!(epsilon_limit(&pts[..1], &w[..1]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_point_is_constant() {
        let map = build_transport_map(&[vec![0.3, 0.4]], |u| u, 0.1).unwrap();
        assert_eq!(map.eval(-5.0), vec![0.3, 0.4]);
        assert_eq!(map.eval(5.0), vec![0.3, 0.4]);
    }

    #[test]
    fn precondition_and_monotonicity() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(build_transport_map(&pts, |u| u, 0.5).is_err());
        assert!(build_transport_map(&pts, |u| -u, 0.1).is_err());
        assert!(build_transport_map(&pts, |u| u, 0.0).is_err());
    }

    #[test]
    fn duplicates_merge_with_larger_mass() {
        let pts = vec![vec![0.0], vec![1.0], vec![1.0]];
        let map = build_transport_map(&pts, |u| u, 0.1).unwrap();
        assert_eq!(map.targets().len(), 2);
        assert!((map.masses()[1] - 2.0 / 3.0).abs() <= 1e-15);
        assert!((map.breakpoints()[0] - 1.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn relu_realization_matches() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.2, 1.0], vec![-0.5, 0.3]];
        let map = build_transport_map(&pts, |u| u, 0.05).unwrap();
        let net = map.to_relu_net().unwrap();
        for i in 0..=200 {
            let z = -0.5 + 2.0 * i as f64 / 200.0;
            let a = map.eval(z);
            let b = net.forward(&[z]).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12, "z={z}");
            }
        }
        for i in 0..4 {
            assert_eq!(map.eval(map.plateau_midpoint(i)), pts[i]);
        }
    }

    #[test]
    fn capacity_formula() {
        assert!(transport_capacity_check(15, 2, 2, 2));
        assert!(!transport_capacity_check(14, 10, 1, 2));
        // d=2, W=29, L=10: 26/2 * floor(26/12) * 5 + 2 = 132
        assert!(transport_capacity_check(29, 10, 132, 2));
        assert!(!transport_capacity_check(29, 10, 133, 2));
    }
}
