//! Shared fixtures for the solver benchmarks.

use invariant_gan::points::Point;
use invariant_gan::EmpiricalMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cloud(n: usize, d: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn uniform_measure(n: usize, d: usize, seed: u64) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(cloud(n, d, seed)).expect("nonempty cloud")
}

/// Weights with small integer ratios so the flow solver sees a modest
/// common denominator.
pub fn weighted_measure(n: usize, d: usize, seed: u64) -> EmpiricalMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4) as f64).collect();
    let total: f64 = raw.iter().sum();
    EmpiricalMeasure::new(cloud(n, d, seed), raw.iter().map(|w| w / total).collect()).expect("valid weights")
}

pub fn cost_matrix(a: &[Point], b: &[Point]) -> Vec<f64> {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| invariant_gan::points::dist(p, q)))
        .collect()
}
