use rayon::prelude::*;

use super::{solve_assignment, solve_transport, EmpiricalMeasure};
use crate::error::{Error, Result};
use crate::group::FiniteGroup;
use crate::points::dist;

/// Largest number of atoms per side handed to an exact solver.
pub const EXACT_OT_CAP: usize = 4000;

/// Fallback common denominator when weights are not exact small rationals.
pub const MASS_DENOMINATOR: i64 = 1_000_000;

/// Upper limit for an exact common denominator.
const MAX_EXACT_DENOMINATOR: u64 = 1_000_000_000;
const RATIONAL_TOL: f64 = 1e-14;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Denominator of the best rational approximation of `w` with denominator
/// at most `max_den`, if it is within `RATIONAL_TOL`.
fn rational_denominator(w: f64, max_den: u64) -> Option<u64> {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = w;
    for _ in 0..64 {
        let a = x.floor();
        if a > 1e18 {
            break;
        }
        let a = a as u64;
        let (p2, q2) = (a.checked_mul(p1)?.checked_add(p0)?, a.checked_mul(q1)?.checked_add(q0)?);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if (w - p1 as f64 / q1 as f64).abs() <= RATIONAL_TOL {
            return Some(q1);
        }
        let frac = x - a as f64;
        if frac <= 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

fn common_denominator(weights: &[f64]) -> Option<u64> {
    let mut den = 1u64;
    for &w in weights {
        let q = rational_denominator(w, MAX_EXACT_DENOMINATOR)?;
        den = den.checked_mul(q / gcd(den, q))?;
        if den > MAX_EXACT_DENOMINATOR {
            return None;
        }
    }
    Some(den)
}

/// Largest-remainder rounding of `weights * den` to integers summing to `den`.
fn round_to(weights: &[f64], den: i64) -> Result<Vec<i64>> {
    let scaled: Vec<f64> = weights.iter().map(|w| w * den as f64).collect();
    let mut ints: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let short = den - ints.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - ints[a] as f64;
        let rb = scaled[b] - ints[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if short < 0 || short as usize > weights.len() {
        return Err(Error::Precision(format!("rounding deficit {short} out of range")));
    }
    for &i in order.iter().take(short as usize) {
        ints[i] += 1;
    }
    if let Some(i) = (0..weights.len()).find(|&i| weights[i] > 0.0 && ints[i] == 0) {
        return Err(Error::Precision(format!(
            "weight {} rounds to zero at denominator {den}",
            weights[i]
        )));
    }
    Ok(ints)
}

/// Integer masses for two weight vectors on a shared denominator. Uses an
/// exact common denominator when every weight is a rational with a small
/// enough denominator, otherwise `MASS_DENOMINATOR` with largest-remainder
/// rounding.
pub fn integer_masses(a: &[f64], b: &[f64]) -> Result<(Vec<i64>, Vec<i64>, i64)> {
    let exact = common_denominator(a).and_then(|da| {
        let db = common_denominator(b)?;
        let l = da.checked_mul(db / gcd(da, db))?;
        (l <= MAX_EXACT_DENOMINATOR).then_some(l)
    });
    let den = exact.map(|d| d as i64).unwrap_or(MASS_DENOMINATOR);
    Ok((round_to(a, den)?, round_to(b, den)?, den))
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let big = mu.len().max(nu.len());
    if big > EXACT_OT_CAP {
        return Err(Error::CapExceeded(format!(
            "{big} atoms on one side, cap is {EXACT_OT_CAP}"
        )));
    }
    Ok(())
}

fn cost_matrix<F>(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, ground: F) -> Vec<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = nu.len();
    let mut cost = vec![0.0; mu.len() * n];
    cost.par_chunks_mut(n).zip(mu.points().par_iter()).for_each(|(row, x)| {
        for (c, y) in row.iter_mut().zip(nu.points()) {
            *c = ground(x, y);
        }
    });
    cost
}

fn flow_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &[f64]) -> Result<f64> {
    let (a, b, den) = integer_masses(mu.weights(), nu.weights())?;
    let plan = solve_transport(&a, &b, cost)?;
    Ok(plan.cost / den as f64)
}

fn uniform_same_size(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> bool {
    mu.len() == nu.len() && mu.is_uniform() && nu.is_uniform()
}

/// Optimal transport cost under an arbitrary ground cost.
pub fn transport_cost<F>(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, ground: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    check_pair(mu, nu)?;
    let cost = cost_matrix(mu, nu, ground);
    if uniform_same_size(mu, nu) {
        let n = mu.len();
        let (_, total) = solve_assignment(&cost, n);
        return Ok(total / n as f64);
    }
    flow_cost(mu, nu, &cost)
}

/// Exact Wasserstein-1 with Euclidean ground cost. Equal-size uniform
/// measures go through the assignment solver, everything else through the
/// transportation simplex on integer masses.
pub fn wasserstein1_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    transport_cost(mu, nu, dist)
}

pub fn w1_via_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    if !uniform_same_size(mu, nu) {
        return Err(Error::invalid("assignment path needs equal-size uniform measures"));
    }
    let n = mu.len();
    let (_, total) = solve_assignment(&cost_matrix(mu, nu, dist), n);
    Ok(total / n as f64)
}

pub fn w1_via_flow(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    flow_cost(mu, nu, &cost_matrix(mu, nu, dist))
}

/// `W1(S^Sigma mu, S^Sigma nu)` computed without expanding orbits: for an
/// orthogonal group this is the transport cost of `mu` to `nu` under the
/// orbit distance `min_sigma |x - sigma y|`.
pub fn wasserstein1_quotient(g: &FiniteGroup, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if !g.is_orthogonal() {
        return Err(Error::invalid("orbit distance needs an orthogonal group"));
    }
    if mu.dim() != g.dim() {
        return Err(Error::invalid("measure and group dimensions differ"));
    }
    check_pair(mu, nu)?;
    // images[j * k + s] = sigma_s y_j
    let k = g.order();
    let mut images = Vec::with_capacity(nu.len() * k);
    for y in nu.points() {
        for e in g.elements() {
            images.push(e.apply(y)?);
        }
    }
    let n = nu.len();
    let mut cost = vec![0.0; mu.len() * n];
    cost.par_chunks_mut(n).zip(mu.points().par_iter()).for_each(|(row, x)| {
        for (j, c) in row.iter_mut().enumerate() {
            *c = images[j * k..(j + 1) * k]
                .iter()
                .map(|im| dist(x, im))
                .fold(f64::INFINITY, f64::min);
        }
    });
    if uniform_same_size(mu, nu) {
        let (_, total) = solve_assignment(&cost, n);
        return Ok(total / n as f64);
    }
    flow_cost(mu, nu, &cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_cyclic_rotation_group, make_reflection_group};
    use crate::measure::symmetrize_measure;
    use crate::points::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Point> {
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    /// Expands integer multiplicities into unit atoms and enumerates all
    /// permutations.
    fn brute_force(a: &[(Point, usize)], b: &[(Point, usize)]) -> f64 {
        let xs: Vec<&Point> = a.iter().flat_map(|(p, k)| std::iter::repeat_n(p, *k)).collect();
        let ys: Vec<&Point> = b.iter().flat_map(|(p, k)| std::iter::repeat_n(p, *k)).collect();
        assert_eq!(xs.len(), ys.len());
        let n = xs.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        fn heap(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if k <= 1 {
                f(perm);
                return;
            }
            for i in 0..k {
                heap(k - 1, perm, f);
                let j = if k % 2 == 0 { i } else { 0 };
                perm.swap(j, k - 1);
            }
        }
        heap(n, &mut perm, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| dist(xs[i], ys[j])).sum();
            best = best.min(c);
        });
        best / n as f64
    }

    #[test]
    fn point_masses_and_line_example() {
        assert_eq!(wasserstein1_exact(&line(&[0.0]), &line(&[1.0])).unwrap(), 1.0);
        let w = wasserstein1_exact(&line(&[0.0, 1.0]), &line(&[0.5, 1.5])).unwrap();
        assert!((w - 0.5).abs() <= 1e-12);
        let m = line(&[0.2, 0.9, -0.4]);
        assert_eq!(wasserstein1_exact(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let a = line(&[0.0]);
        let b = EmpiricalMeasure::dirac(vec![0.0, 0.0]);
        assert!(matches!(wasserstein1_exact(&a, &b), Err(Error::InvalidArgument(_))));
        let big = EmpiricalMeasure::uniform(vec![vec![0.0]; EXACT_OT_CAP + 1]).unwrap();
        assert!(matches!(wasserstein1_exact(&big, &a), Err(Error::CapExceeded(_))));
        let tiny = EmpiricalMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.0 - 1e-12, 1e-12]).unwrap();
        assert!(matches!(wasserstein1_exact(&tiny, &a), Err(Error::Precision(_))));
    }

    #[test]
    fn weighted_matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let total = 7usize;
            let split = |rng: &mut ChaCha8Rng, parts: usize| -> Vec<usize> {
                let mut ks = vec![1usize; parts];
                for _ in 0..total - parts {
                    ks[rng.random_range(0..parts)] += 1;
                }
                ks
            };
            let na = rng.random_range(1..=4);
            let nb = rng.random_range(1..=5);
            let ka = split(&mut rng, na);
            let kb = split(&mut rng, nb);
            let a: Vec<(Point, usize)> = cloud(&mut rng, na, 2).into_iter().zip(ka).collect();
            let b: Vec<(Point, usize)> = cloud(&mut rng, nb, 2).into_iter().zip(kb).collect();
            let to_measure = |v: &[(Point, usize)]| {
                EmpiricalMeasure::new(
                    v.iter().map(|(p, _)| p.clone()).collect(),
                    v.iter().map(|(_, k)| *k as f64 / total as f64).collect(),
                )
                .unwrap()
            };
            let w = wasserstein1_exact(&to_measure(&a), &to_measure(&b)).unwrap();
            assert!((w - brute_force(&a, &b)).abs() <= 1e-9);
        }
    }

    #[test]
    fn assignment_and_flow_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 5, 40, 150] {
            let a = EmpiricalMeasure::uniform(cloud(&mut rng, n, 3)).unwrap();
            let b = EmpiricalMeasure::uniform(cloud(&mut rng, n, 3)).unwrap();
            let x = w1_via_assignment(&a, &b).unwrap();
            let y = w1_via_flow(&a, &b).unwrap();
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(1..7)).collect();
            let ms: Vec<EmpiricalMeasure> = sizes
                .iter()
                .map(|&n| {
                    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1..5) as f64).collect();
                    let s: f64 = raw.iter().sum();
                    EmpiricalMeasure::new(cloud(&mut rng, n, 2), raw.iter().map(|r| r / s).collect()).unwrap()
                })
                .collect();
            let d = |i: usize, j: usize| wasserstein1_exact(&ms[i], &ms[j]).unwrap();
            assert!((d(0, 1) - d(1, 0)).abs() <= 1e-12);
            assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
            assert_eq!(d(0, 0), 0.0);
        }
    }

    #[test]
    fn quotient_cost_equals_symmetrized_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let groups = [
            make_cyclic_rotation_group(4, 2, (0, 1)).unwrap(),
            make_reflection_group(0, 2).unwrap(),
            make_cyclic_rotation_group(3, 2, (0, 1)).unwrap(),
        ];
        for g in &groups {
            for _ in 0..10 {
                let na = rng.random_range(1..8);
                let nb = rng.random_range(1..8);
                let a = EmpiricalMeasure::uniform(cloud(&mut rng, na, 2)).unwrap();
                let b = EmpiricalMeasure::uniform(cloud(&mut rng, nb, 2)).unwrap();
                let direct = wasserstein1_exact(&symmetrize_measure(g, &a).unwrap(), &symmetrize_measure(g, &b).unwrap())
                    .unwrap();
                let quotient = wasserstein1_quotient(g, &a, &b).unwrap();
                assert!((direct - quotient).abs() <= 1e-9, "{direct} vs {quotient}");
            }
        }
    }

    #[test]
    fn denominators() {
        let (a, b, den) = integer_masses(&[1.0 / 3.0; 3], &[0.25; 4]).unwrap();
        assert_eq!(den, 12);
        assert_eq!(a, vec![4, 4, 4]);
        assert_eq!(b, vec![3, 3, 3, 3]);
        let r2 = 2f64.sqrt() * 1e-3;
        let r3 = 3f64.sqrt() * 1e-3;
        let w = [0.2 + r2, 0.3 + r3, 0.5 - r2 - r3];
        let (a, _, den) = integer_masses(&w, &[1.0]).unwrap();
        assert_eq!(a.iter().sum::<i64>(), den);
        for (k, x) in a.iter().zip(w) {
            assert!((*k as f64 / den as f64 - x).abs() <= 1.0 / den as f64);
        }
    }
}
