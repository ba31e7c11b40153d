//! Weighted point measures, group symmetrization of measures and functions,
//! exact Wasserstein-1 and finite-family integral probability metrics.

mod assignment;
mod ipm;
mod network_simplex;
mod wasserstein;

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::group::FiniteGroup;
use crate::points::Point;

pub use assignment::solve_assignment;
pub use ipm::{
    ipm_finite, lemma1_check, neural_ipm, empirical_lipschitz, FunctionFamily, IpmEstimate, IpmOptConfig,
    Lemma1Result, RealFn,
};
pub use network_simplex::{solve_transport, TransportPlan};
pub use wasserstein::{
    integer_masses, transport_cost, w1_via_assignment, w1_via_flow, wasserstein1_exact, wasserstein1_quotient,
    EXACT_OT_CAP, MASS_DENOMINATOR,
};

/// Tolerance for merging coincident atoms.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Weights must be nonnegative and sum to one within `1e-9`; they are
    /// renormalized unless the sum is already one to within rounding, so
    /// stored weights survive a CSV round trip unchanged.
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("a measure needs at least one atom"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("points have mixed dimensions"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        let weights = if (total - 1.0).abs() <= weights.len() as f64 * f64::EPSILON { weights } else { weights.into_iter().map(|w| w / total).collect() };
        Ok(EmpiricalMeasure { points, weights })
    }

    /// `(1/n) sum_i delta_{x_i}`.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::invalid("a measure needs at least one atom"));
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Point) -> Self {
        EmpiricalMeasure {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// True when every atom carries the same weight.
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-15 * w0.max(1e-300) + 1e-18)
    }

    /// `E_mu f`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn map_points(&self, f: impl Fn(&[f64]) -> Point) -> Result<Self> {
        Self::new(self.points.iter().map(|p| f(p)).collect(), self.weights.clone())
    }

    /// Atoms closer than `tol` (max-coordinate distance, transitively) are
    /// merged into the first of them and their weights added. Output order
    /// follows the first occurrence of each merged atom.
    pub fn merged(&self, tol: f64) -> Self {
        let (points, weights) = merge_atoms(&self.points, &self.weights, tol);
        EmpiricalMeasure { points, weights }
    }

    /// Equality as weighted multisets after merging, with `tol` on both
    /// coordinates and weights.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = self.merged(MERGE_TOL);
        let b = other.merged(MERGE_TOL);
        if a.len() != b.len() {
            return false;
        }
        let mut used = vec![false; b.len()];
        for (p, w) in a.points.iter().zip(&a.weights) {
            let hit = b.points.iter().enumerate().position(|(j, q)| {
                !used[j] && max_coord_diff(p, q) <= tol && (w - b.weights[j]).abs() <= tol
            });
            match hit {
                Some(j) => used[j] = true,
                None => return false,
            }
        }
        true
    }

    /// CSV with header `x_1,...,x_d,weight`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        header.push("weight".into());
        wr.write_record(&header)?;
        for (p, wt) in self.points.iter().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(wt.to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `x_1..x_d[,weight]`; without a `weight` column the measure is
    /// uniform.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let has_weight = header.iter().last() == Some("weight");
        let d = if has_weight { header.len() - 1 } else { header.len() };
        for (i, name) in header.iter().take(d).enumerate() {
            if name != format!("x_{}", i + 1) {
                return Err(Error::invalid(format!("unexpected CSV column `{name}`")));
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad number `{s}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != header.len() {
                return Err(Error::invalid("ragged CSV row"));
            }
            points.push(vals[..d].to_vec());
            if has_weight {
                weights.push(vals[d]);
            }
        }
        if has_weight {
            Self::new(points, weights)
        } else {
            Self::uniform(points)
        }
    }
}

fn max_coord_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn merge_atoms(points: &[Point], weights: &[f64], tol: f64) -> (Vec<Point>, Vec<f64>) {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| points[i][0].total_cmp(&points[j][0]).then(i.cmp(&j)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..n {
        let i = order[a];
        for &j in &order[a + 1..] {
            if points[j][0] - points[i][0] > tol {
                break;
            }
            if max_coord_diff(&points[i], &points[j]) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out_points = Vec::new();
    let mut out_weights: Vec<f64> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = out_points.len();
            out_points.push(points[r].clone());
            out_weights.push(0.0);
        }
        out_weights[slot[r]] += weights[i];
    }
    (out_points, out_weights)
}

/// `S^Sigma[mu]`: every atom spread uniformly over its orbit, coincident
/// atoms merged.
pub fn symmetrize_measure(g: &FiniteGroup, mu: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    if mu.dim() != g.dim() {
        return Err(Error::invalid("measure and group dimensions differ"));
    }
    let k = g.order() as f64;
    let mut points = Vec::with_capacity(mu.len() * g.order());
    let mut weights = Vec::with_capacity(mu.len() * g.order());
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        for e in g.elements() {
            points.push(e.apply(p)?);
            weights.push(w / k);
        }
    }
    let (points, weights) = merge_atoms(&points, &weights, MERGE_TOL);
    Ok(EmpiricalMeasure { points, weights })
}

/// `S_Sigma[f](x) = (1/|Sigma|) sum_i f(sigma_i x)`.
pub fn symmetrize_function<'a, F>(g: &'a FiniteGroup, f: F) -> impl Fn(&[f64]) -> f64 + 'a
where
    F: Fn(&[f64]) -> f64 + 'a,
{
    let k = g.order() as f64;
    move |x: &[f64]| {
        let mut buf = vec![0.0; x.len()];
        let mut acc = 0.0;
        for e in g.elements() {
            e.apply_into(x, &mut buf);
            acc += f(&buf);
        }
        acc / k
    }
}
