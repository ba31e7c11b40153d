//! Built-in synthetic target distributions, each exactly invariant under the
//! group it is paired with.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::domain::{sample_unit_ball, Sampler};
use crate::error::{Error, Result};
use crate::group::{FiniteGroup, MATRIX_TOL};
use crate::points::{dist, Point};

#[derive(Clone)]
pub struct Target {
    pub name: String,
    pub dim: usize,
    /// Diameter of the support (or of the truncation region).
    pub diameter: f64,
    pub sampler: Sampler,
    /// Point sets every symmetry must map onto themselves, on top of being
    /// orthogonal.
    pub anchors: Vec<Vec<Point>>,
}

impl std::fmt::Debug for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Target")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("diameter", &self.diameter)
            .field("anchors", &self.anchors)
            .finish()
    }
}

impl Target {
    pub fn sample(&self, rng: &mut dyn RngCore) -> Point {
        (self.sampler)(rng)
    }

    pub fn sample_n(&self, n: usize, rng: &mut dyn RngCore) -> Vec<Point> {
        (0..n).map(|_| (self.sampler)(rng)).collect()
    }

    /// Whether the law is exactly invariant under every element of `g`.
    pub fn is_invariant_under(&self, g: &FiniteGroup) -> bool {
        g.dim() == self.dim
            && g.elements().iter().all(|e| {
                e.is_orthogonal()
                    && self.anchors.iter().all(|set| {
                        set.iter().all(|p| {
                            let q = e.apply(p).expect("anchor dimension");
                            set.iter().any(|r| dist(&q, r) <= MATRIX_TOL)
                        })
                    })
            })
    }
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Two concentric Gaussian rings (radii 0.35 and 0.75, radial sd 0.06),
/// uniform angle, truncated to the unit disk. Invariant under every planar
/// rotation about the origin.
pub fn ring_mixture() -> Target {
    Target {
        name: "ring_mixture".into(),
        dim: 2,
        diameter: 2.0,
        anchors: Vec::new(),
        sampler: Arc::new(|rng| {
            let centre = if rng.random::<bool>() { 0.35 } else { 0.75 };
            let r = loop {
                let r = centre + 0.06 * normal(rng);
                if (0.0..=1.0).contains(&r) {
                    break r;
                }
            };
            let t = 2.0 * PI * rng.random::<f64>();
            vec![r * t.cos(), r * t.sin()]
        }),
    }
}

/// `modes` isotropic Gaussians (sd 0.08) centred at radius 0.6 and angles
/// `2 pi j / modes`, truncated to the unit disk. Invariant under `C_k` for
/// every `k` dividing `modes`.
pub fn ring_modes(modes: usize) -> Result<Target> {
    if modes == 0 {
        return Err(Error::invalid("need at least one mode"));
    }
    Ok(Target {
        name: format!("ring_modes_{modes}"),
        dim: 2,
        diameter: 2.0,
        anchors: vec![(0..modes)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / modes as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()],
        sampler: Arc::new(move |rng| {
            let j = rng.random_range(0..modes);
            let a = 2.0 * PI * j as f64 / modes as f64;
            loop {
                let x = 0.6 * a.cos() + 0.08 * normal(rng);
                let y = 0.6 * a.sin() + 0.08 * normal(rng);
                if x * x + y * y <= 1.0 {
                    return vec![x, y];
                }
            }
        }),
    })
}

/// Gaussians (sd 0.15) at `(+-0.5, 0.5)`, truncated to `[-1,1] x [0,1]`.
/// Invariant under the reflection `(x, y) -> (-x, y)`.
pub fn mirror_gaussians() -> Target {
    Target {
        name: "mirror_gaussians".into(),
        dim: 2,
        diameter: 5f64.sqrt(),
        anchors: vec![vec![vec![0.5, 0.5], vec![-0.5, 0.5]]],
        sampler: Arc::new(|rng| {
            let sx = if rng.random::<bool>() { 0.5 } else { -0.5 };
            loop {
                let x = sx + 0.15 * normal(rng);
                let y = 0.5 + 0.15 * normal(rng);
                if (-1.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
                    return vec![x, y];
                }
            }
        }),
    }
}

/// Uniform on the unit circle in the `(x, y)` plane of `R^3`.
pub fn circle_r3() -> Target {
    Target {
        name: "circle_r3".into(),
        dim: 3,
        diameter: 2.0,
        anchors: vec![vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]]],
        sampler: Arc::new(|rng| {
            let t = 2.0 * PI * rng.random::<f64>();
            vec![t.cos(), t.sin(), 0.0]
        }),
    }
}

/// Uniform on the unit ball of `R^3`.
pub fn ball_r3() -> Target {
    Target {
        name: "ball_r3".into(),
        dim: 3,
        diameter: 2.0,
        anchors: Vec::new(),
        sampler: Arc::new(|rng| sample_unit_ball(3, rng)),
    }
}

/// `ring_mixture`, `ring_modes_<k>`, `mirror_gaussians`, `circle_r3` or `ball_r3`.
pub fn builtin_target(name: &str) -> Result<Target> {
    match name {
        "ring_mixture" => Ok(ring_mixture()),
        "mirror_gaussians" => Ok(mirror_gaussians()),
        "circle_r3" => Ok(circle_r3()),
        "ball_r3" => Ok(ball_r3()),
        _ => match name.strip_prefix("ring_modes_").and_then(|s| s.parse().ok()) {
            Some(k) => ring_modes(k),
            None => Err(Error::invalid(format!("unknown target `{name}`"))),
        },
    }
}
