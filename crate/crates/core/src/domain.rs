//! Domains `X = Sigma x X0`: membership predicates for the ambient set and a
//! fundamental domain, the projection `T0` onto orbit representatives, and an
//! empirical check of the separation assumption used by the rate bounds.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::covering::greedy_epsilon_net;
use crate::error::{Error, Result};
use crate::group::{make_cyclic_rotation_group, make_reflection_group, FiniteGroup, MATRIX_TOL};
use crate::measure::EmpiricalMeasure;
use crate::points::{dist, least_squares, GridIndex, Point};

pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
/// Distance-like violation measure; zero on the closure of the set.
pub type Gap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type Sampler = Arc<dyn Fn(&mut dyn RngCore) -> Point + Send + Sync>;

#[derive(Clone)]
pub struct DomainSpec {
    name: String,
    dim: usize,
    group: Arc<FiniteGroup>,
    in_x: Predicate,
    in_x0: Predicate,
    x_gap: Gap,
    x0_gap: Gap,
    sample_x0: Sampler,
    diameter_x0: f64,
}

impl fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("group_order", &self.group.order())
            .field("diameter_x0", &self.diameter_x0)
            .finish()
    }
}

pub struct DomainParts {
    pub name: String,
    pub group: FiniteGroup,
    pub in_x: Predicate,
    pub in_x0: Predicate,
    pub x_gap: Gap,
    pub x0_gap: Gap,
    pub sample_x0: Sampler,
    pub diameter_x0: f64,
}

impl DomainSpec {
    /// User-supplied domain. The predicates are trusted; use
    /// [`DomainSpec::check_uniqueness`] to test them on a cloud.
    pub fn new(parts: DomainParts) -> Result<Self> {
        if !(parts.diameter_x0 >= 0.0) {
            return Err(Error::invalid("diameter of X0 must be nonnegative"));
        }
        Ok(DomainSpec {
            name: parts.name,
            dim: parts.group.dim(),
            group: Arc::new(parts.group),
            in_x: parts.in_x,
            in_x0: parts.in_x0,
            x_gap: parts.x_gap,
            x0_gap: parts.x0_gap,
            sample_x0: parts.sample_x0,
            diameter_x0: parts.diameter_x0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn diameter_x0(&self) -> f64 {
        self.diameter_x0
    }

    pub fn in_x(&self, x: &[f64]) -> bool {
        x.len() == self.dim && (self.in_x)(x)
    }

    pub fn in_x0(&self, x: &[f64]) -> bool {
        x.len() == self.dim && (self.in_x0)(x)
    }

    pub fn x0_gap(&self, x: &[f64]) -> f64 {
        (self.x0_gap)(x)
    }

    pub fn x_gap(&self, x: &[f64]) -> f64 {
        (self.x_gap)(x)
    }

    pub fn sample_x0(&self, rng: &mut dyn RngCore) -> Point {
        (self.sample_x0)(rng)
    }

    pub fn sample_x0_cloud(&self, n: usize, rng: &mut dyn RngCore) -> Vec<Point> {
        (0..n).map(|_| self.sample_x0(rng)).collect()
    }

    /// Uniform on X: a point of X0 moved by a Haar-random element.
    pub fn sample_x(&self, rng: &mut dyn RngCore) -> Point {
        let x0 = self.sample_x0(rng);
        let i = self.group.haar_index(rng);
        self.group.element(i).apply(&x0).expect("sampler dimension")
    }

    /// Counts, over `cloud`, points whose orbit meets X0 in a number of
    /// points other than one (counting distinct orbit points). Returns
    /// `(zero_hits, multiple_hits)`.
    pub fn check_uniqueness(&self, cloud: &[Point]) -> Result<(usize, usize)> {
        let mut zero = 0;
        let mut multi = 0;
        for x in cloud {
            let orbit = self.group.orbit(x)?;
            let mut hits: Vec<&Point> = Vec::new();
            for y in &orbit {
                if self.in_x0(y) && !hits.iter().any(|h| dist(h, y) <= MATRIX_TOL) {
                    hits.push(y);
                }
            }
            match hits.len() {
                0 => zero += 1,
                1 => {}
                _ => multi += 1,
            }
        }
        Ok((zero, multi))
    }
}

fn parse_suffix(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix).and_then(|s| s.parse().ok())
}

/// Returns one of the shipped domains: `mirror_square`, `disk_sector_<k>`,
/// `box_<d>`, `ball_<d>` or `circle_in_R3`.
pub fn builtin_domain(name: &str) -> Result<DomainSpec> {
    if name == "mirror_square" {
        return mirror_square();
    }
    if name == "circle_in_R3" {
        return circle_in_r3();
    }
    if let Some(k) = parse_suffix(name, "disk_sector_") {
        return disk_sector(k);
    }
    if let Some(d) = parse_suffix(name, "box_") {
        return unit_box(d);
    }
    if let Some(d) = parse_suffix(name, "ball_") {
        return unit_ball(d);
    }
    Err(Error::invalid(format!("unknown domain `{name}`")))
}

fn interval_gap(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

fn mirror_square() -> Result<DomainSpec> {
    DomainSpec::new(DomainParts {
        name: "mirror_square".into(),
        group: make_reflection_group(0, 2)?,
        in_x: Arc::new(|p| (-1.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])),
        in_x0: Arc::new(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])),
        x_gap: Arc::new(|p| interval_gap(p[0], -1.0, 1.0).max(interval_gap(p[1], 0.0, 1.0))),
        x0_gap: Arc::new(|p| interval_gap(p[0], 0.0, 1.0).max(interval_gap(p[1], 0.0, 1.0))),
        sample_x0: Arc::new(|rng| vec![rng.random::<f64>(), rng.random::<f64>()]),
        diameter_x0: 2f64.sqrt(),
    })
}

/// Polar angle in `[0, 2 pi)`; the origin gets angle 0.
fn polar_angle(p: &[f64]) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        (t + 2.0 * PI).min(2.0 * PI - f64::EPSILON * 4.0)
    } else {
        t
    }
}

fn disk_sector(k: usize) -> Result<DomainSpec> {
    let group = make_cyclic_rotation_group(k, 2, (0, 1))?;
    let alpha = 2.0 * PI / k as f64;
    let radius = |p: &[f64]| (p[0] * p[0] + p[1] * p[1]).sqrt();
    let diameter = if alpha >= PI { 2.0 } else { (2.0 * (alpha / 2.0).sin()).max(1.0) };
    DomainSpec::new(DomainParts {
        name: format!("disk_sector_{k}"),
        group,
        in_x: Arc::new(move |p| radius(p) <= 1.0),
        in_x0: Arc::new(move |p| radius(p) <= 1.0 && (k == 1 || polar_angle(p) < alpha)),
        x_gap: Arc::new(move |p| (radius(p) - 1.0).max(0.0)),
        x0_gap: Arc::new(move |p| {
            let r = radius(p);
            let t = polar_angle(p);
            let angular = if k == 1 || t <= alpha { 0.0 } else { (t - alpha).min(2.0 * PI - t) };
            (r - 1.0).max(0.0).max(r.min(1.0) * angular)
        }),
        sample_x0: Arc::new(move |rng| {
            let r = rng.random::<f64>().sqrt();
            let t = alpha * rng.random::<f64>();
            vec![r * t.cos(), r * t.sin()]
        }),
        diameter_x0: diameter,
    })
}

fn unit_box(d: usize) -> Result<DomainSpec> {
    let inside = |p: &[f64]| p.iter().all(|v| (0.0..=1.0).contains(v));
    let gap: Gap = Arc::new(|p: &[f64]| p.iter().map(|&v| interval_gap(v, 0.0, 1.0)).fold(0.0, f64::max));
    DomainSpec::new(DomainParts {
        name: format!("box_{d}"),
        group: FiniteGroup::trivial(d)?,
        in_x: Arc::new(inside),
        in_x0: Arc::new(inside),
        x_gap: gap.clone(),
        x0_gap: gap,
        sample_x0: Arc::new(move |rng| (0..d).map(|_| rng.random::<f64>()).collect()),
        diameter_x0: (d as f64).sqrt(),
    })
}

fn unit_ball(d: usize) -> Result<DomainSpec> {
    let gap: Gap = Arc::new(|p: &[f64]| (crate::points::norm(p) - 1.0).max(0.0));
    DomainSpec::new(DomainParts {
        name: format!("ball_{d}"),
        group: FiniteGroup::trivial(d)?,
        in_x: Arc::new(|p| crate::points::norm(p) <= 1.0),
        in_x0: Arc::new(|p| crate::points::norm(p) <= 1.0),
        x_gap: gap.clone(),
        x0_gap: gap,
        sample_x0: Arc::new(move |rng| sample_unit_ball(d, rng)),
        diameter_x0: 2.0,
    })
}

pub(crate) fn sample_unit_ball(d: usize, rng: &mut dyn RngCore) -> Point {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = crate::points::norm(&v);
        if n > 1e-300 {
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            return v.into_iter().map(|x| x / n * r).collect();
        }
    }
}

/// Unit circle in the `(x, y)` plane of `R^3`.
fn circle_in_r3() -> Result<DomainSpec> {
    let gap: Gap = Arc::new(|p: &[f64]| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        (r - 1.0).abs().max(p[2].abs())
    });
    let g2 = gap.clone();
    let g3 = gap.clone();
    DomainSpec::new(DomainParts {
        name: "circle_in_R3".into(),
        group: FiniteGroup::trivial(3)?,
        in_x: Arc::new(move |p| g2(p) <= MATRIX_TOL),
        in_x0: Arc::new(move |p| g3(p) <= MATRIX_TOL),
        x_gap: gap.clone(),
        x0_gap: gap,
        sample_x0: Arc::new(|rng| {
            let t = 2.0 * PI * rng.random::<f64>();
            vec![t.cos(), t.sin(), 0.0]
        }),
        diameter_x0: 2.0,
    })
}

/// Orbit representative of `x` in X0 and the element `sigma` (by index into
/// the group) with `sigma x0 = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub x0: Point,
    pub sigma: usize,
}

/// The projection `T0`. Scans group elements in index order and takes the
/// first image inside X0; if rounding leaves no image inside, the first image
/// within `1e-9` of X0 is taken instead.
pub fn project_t0(spec: &DomainSpec, x: &[f64]) -> Result<Projection> {
    if x.len() != spec.dim {
        return Err(Error::invalid(format!(
            "point has dimension {}, domain has dimension {}",
            x.len(),
            spec.dim
        )));
    }
    if !spec.in_x(x) && spec.x_gap(x) > MATRIX_TOL {
        return Err(Error::OutOfDomain(format!("{x:?} is not in {}", spec.name)));
    }
    let g = spec.group();
    let mut images = Vec::with_capacity(g.order());
    for (t, el) in g.elements().iter().enumerate() {
        let y = el.apply(x)?;
        if spec.in_x0(&y) {
            return Ok(Projection {
                x0: y,
                sigma: g.inverse_index(t),
            });
        }
        images.push(y);
    }
    for (t, y) in images.into_iter().enumerate() {
        if spec.x0_gap(&y) <= MATRIX_TOL {
            return Ok(Projection {
                x0: y,
                sigma: g.inverse_index(t),
            });
        }
    }
    Err(Error::Domain(format!(
        "no orbit point of {x:?} lies in the fundamental domain of {}",
        spec.name
    )))
}

/// `(T0)_# mu`: every atom moved to its orbit representative, weights kept.
pub fn pushforward_to_domain(spec: &DomainSpec, mu: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    let points = mu
        .points()
        .iter()
        .map(|p| project_t0(spec, p).map(|pr| pr.x0))
        .collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::new(points, mu.weights().to_vec())
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumption2Row {
    pub epsilon: f64,
    pub n_violating: usize,
    pub n_a0: usize,
    pub n_x0: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumption2Report {
    pub domain: String,
    pub cloud_size: usize,
    pub rows: Vec<Assumption2Row>,
    /// Slope of `log N(A0) - log N(X0)` against `log eps`; 0 when the
    /// violating set is empty at fewer than two scales.
    pub fitted_r: f64,
    /// Sampled pairs where a group element shrinks distances (only checked
    /// for non-orthogonal actions).
    pub contraction_violations: usize,
}

impl Assumption2Report {
    /// Columns `epsilon,n_violating,N_A0,N_X0,fitted_r`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epsilon", "n_violating", "N_A0", "N_X0", "fitted_r"])?;
        for row in &self.rows {
            wr.write_record([
                row.epsilon.to_string(),
                row.n_violating.to_string(),
                row.n_a0.to_string(),
                row.n_x0.to_string(),
                self.fitted_r.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Points `x` of the cloud for which some `x'` in the cloud and elements
/// `sigma != sigma'` give `|sigma x - sigma' x'| <= 2 eps`.
pub fn separation_violators(g: &FiniteGroup, cloud: &[Point], epsilon: f64) -> Vec<bool> {
    let n = cloud.len();
    let order = g.order();
    let mut flags = vec![false; n];
    if order == 1 || n == 0 {
        return flags;
    }
    let images: Vec<Point> = cloud
        .iter()
        .flat_map(|x| g.elements().iter().map(move |e| e.apply(x).expect("cloud dimension")))
        .collect();
    let radius = 2.0 * epsilon;
    let grid = GridIndex::new(&images, radius);
    for (a, img) in images.iter().enumerate() {
        let (i, s) = (a / order, a % order);
        if flags[i] {
            continue;
        }
        grid.for_each_candidate(img, |b| {
            let (j, t) = (b / order, b % order);
            if s != t && dist(img, &images[b]) <= radius {
                flags[i] = true;
                flags[j] = true;
            }
        });
    }
    flags
}

/// Empirical stand-in for the separation assumption: for each `eps`, marks
/// cloud points of X0 involved in a `2 eps` collision between distinct group
/// images, covers them greedily and fits the exponent `r`.
pub fn check_assumption2<R: Rng>(
    spec: &DomainSpec,
    epsilons: &[f64],
    cloud_size: usize,
    rng: &mut R,
) -> Result<Assumption2Report> {
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("epsilons must be positive"));
    }
    if cloud_size < 1000 {
        return Err(Error::invalid("cloud_size must be at least 1000"));
    }
    let cloud = spec.sample_x0_cloud(cloud_size, rng);
    let g = spec.group();
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let flags = separation_violators(g, &cloud, eps);
        let violators: Vec<Point> = cloud
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(p, _)| p.clone())
            .collect();
        let n_a0 = if violators.is_empty() { 0 } else { greedy_epsilon_net(&violators, eps)?.len() };
        let n_x0 = greedy_epsilon_net(&cloud, eps)?.len();
        rows.push(Assumption2Row {
            epsilon: eps,
            n_violating: violators.len(),
            n_a0,
            n_x0,
        });
    }
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n_a0 > 0)
        .map(|r| (r.epsilon.ln(), (r.n_a0 as f64).ln() - (r.n_x0 as f64).ln()))
        .collect();
    let fitted_r = if fit.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        least_squares(&xs, &ys).0
    } else {
        0.0
    };

    let mut contraction_violations = 0;
    if !g.is_orthogonal() {
        for a in 0..cloud.len().min(2000) {
            let b = (a * 7919 + 1) % cloud.len();
            for e in g.elements() {
                let d0 = dist(&cloud[a], &cloud[b]);
                let d1 = dist(&e.apply(&cloud[a])?, &e.apply(&cloud[b])?);
                if d1 + MATRIX_TOL < d0 {
                    contraction_violations += 1;
                }
            }
        }
    }

    Ok(Assumption2Report {
        domain: spec.name.clone(),
        cloud_size,
        rows,
        fitted_r,
        contraction_violations,
    })
}
