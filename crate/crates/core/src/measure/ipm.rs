use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{symmetrize_measure, EmpiricalMeasure};
use crate::error::{Error, Result};
use crate::group::FiniteGroup;
use crate::nn::{DiscWorkspace, InvariantDiscriminator, ReluNet};
use crate::points::{dist, Point};

pub type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A finite function class with its claimed Lipschitz and sup bounds.
#[derive(Clone)]
pub struct FunctionFamily {
    pub functions: Vec<RealFn>,
    pub lipschitz_bound: f64,
    pub sup_bound: f64,
}

impl std::fmt::Debug for FunctionFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionFamily")
            .field("len", &self.functions.len())
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl FunctionFamily {
    pub fn new(functions: Vec<RealFn>, lipschitz_bound: f64, sup_bound: f64) -> Self {
        FunctionFamily {
            functions,
            lipschitz_bound,
            sup_bound,
        }
    }

    /// Checks both bounds on the given points and all pairs of them.
    pub fn check_bounds(&self, points: &[Point]) -> bool {
        self.functions.iter().all(|f| {
            let vals: Vec<f64> = points.iter().map(|p| f(p)).collect();
            vals.iter().all(|v| v.abs() <= self.sup_bound)
                && empirical_lipschitz(|p| f(p), points) <= self.lipschitz_bound * (1.0 + 1e-6)
        })
    }
}

/// `max_f (E_nu f - E_mu f)` over a finite family.
pub fn ipm_finite(family: &[RealFn], nu: &EmpiricalMeasure, mu: &EmpiricalMeasure) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::invalid("function family is empty"));
    }
    if nu.dim() != mu.dim() {
        return Err(Error::invalid("measures have different dimensions"));
    }
    Ok(family
        .iter()
        .map(|f| nu.expectation(|p| f(p)) - mu.expectation(|p| f(p)))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest difference quotient `|f(x) - f(y)| / |x - y|` over distinct pairs.
pub fn empirical_lipschitz(f: impl Fn(&[f64]) -> f64, points: &[Point]) -> f64 {
    let vals: Vec<f64> = points.iter().map(|p| f(p)).collect();
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = dist(&points[i], &points[j]);
            if d > 0.0 {
                best = best.max((vals[i] - vals[j]).abs() / d);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct IpmOptConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Weight bound `K` enforced after every step.
    pub clip: f64,
    pub seed: u64,
}

impl Default for IpmOptConfig {
    fn default() -> Self {
        IpmOptConfig {
            steps: 2000,
            learning_rate: 0.05,
            clip: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmEstimate {
    /// Best objective seen.
    pub value: f64,
    pub best_step: usize,
    /// Discriminator achieving `value`.
    pub discriminator: InvariantDiscriminator,
}

fn objective_and_grad(
    disc: &InvariantDiscriminator,
    nu: &EmpiricalMeasure,
    mu: &EmpiricalMeasure,
    grad: &mut [f64],
    ws: &mut DiscWorkspace,
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut obj = 0.0;
    for (p, w) in nu.points().iter().zip(nu.weights()) {
        obj += w * disc.accumulate(p, *w, grad, ws);
    }
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        obj -= w * disc.accumulate(p, -*w, grad, ws);
    }
    obj
}

/// Neural network distance estimate: full-batch gradient ascent on
/// `E_nu D - E_mu D` over the template's architecture, freshly initialized
/// from `cfg.seed`, clipping to `cfg.clip` after every step.
pub fn neural_ipm(
    template: &InvariantDiscriminator,
    nu: &EmpiricalMeasure,
    mu: &EmpiricalMeasure,
    cfg: &IpmOptConfig,
) -> Result<IpmEstimate> {
    if nu.dim() != template.dim() || mu.dim() != template.dim() {
        return Err(Error::invalid("measure and discriminator dimensions differ"));
    }
    if !(cfg.learning_rate > 0.0) || !(cfg.clip > 0.0) {
        return Err(Error::invalid("learning rate and clip must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = ReluNet::init(template.base().widths(), Some(cfg.clip), &mut rng)?;
    let mut disc = InvariantDiscriminator::new(base, template.group().clone(), template.mode())?;
    let mut grad = vec![0.0; disc.base().num_params()];
    let mut ws = DiscWorkspace::default();
    let mut best = (f64::NEG_INFINITY, 0usize, disc.clone());
    for step in 0..=cfg.steps {
        let obj = objective_and_grad(&disc, nu, mu, &mut grad, &mut ws);
        if obj > best.0 {
            best = (obj, step, disc.clone());
        }
        if step == cfg.steps {
            break;
        }
        let net = disc.base_mut();
        for (p, g) in net.params_mut().iter_mut().zip(&grad) {
            *p += cfg.learning_rate * g;
        }
        net.clip_weights(cfg.clip);
    }
    Ok(IpmEstimate {
        value: best.0,
        best_step: best.1,
        discriminator: best.2,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma1Result {
    /// `d_Gamma(S^G nu, S^G mu)`.
    pub lhs: f64,
    /// `d_{Gamma_G}(nu, mu)` over the invariant members of `Gamma`.
    pub rhs: f64,
    /// `d_Gamma(nu, mu)`, which equals `lhs` when both measures are invariant.
    pub direct: f64,
}

fn is_invariant_on(g: &FiniteGroup, f: &RealFn, points: &[Point]) -> bool {
    points.iter().all(|x| {
        let fx = f(x);
        g.elements().iter().all(|e| {
            let y = e.apply(x).expect("dimension checked");
            (f(&y) - fx).abs() <= 1e-12 * (1.0 + fx.abs())
        })
    })
}

/// Builds `Gamma = F u S_G[F]` and compares the IPM of the symmetrized
/// measures with the IPM of the raw measures over the invariant part of
/// `Gamma`.
pub fn lemma1_check(
    g: &FiniteGroup,
    seeds: &[RealFn],
    nu: &EmpiricalMeasure,
    mu: &EmpiricalMeasure,
) -> Result<Lemma1Result> {
    if seeds.is_empty() {
        return Err(Error::invalid("seed family is empty"));
    }
    if nu.dim() != g.dim() || mu.dim() != g.dim() {
        return Err(Error::invalid("measure and group dimensions differ"));
    }
    let gg = Arc::new(g.clone());
    let mut gamma: Vec<RealFn> = seeds.to_vec();
    let mut invariant: Vec<RealFn> = Vec::new();
    let support: Vec<Point> = nu.points().iter().chain(mu.points()).cloned().collect();
    for f in seeds {
        if is_invariant_on(g, f, &support) {
            invariant.push(f.clone());
        }
        let (f, gg) = (f.clone(), gg.clone());
        let sym: RealFn = Arc::new(move |x: &[f64]| {
            let mut buf = vec![0.0; x.len()];
            let mut acc = 0.0;
            for e in gg.elements() {
                e.apply_into(x, &mut buf);
                acc += f(&buf);
            }
            acc / gg.order() as f64
        });
        gamma.push(sym.clone());
        invariant.push(sym);
    }
    let snu = symmetrize_measure(g, nu)?;
    let smu = symmetrize_measure(g, mu)?;
    Ok(Lemma1Result {
        lhs: ipm_finite(&gamma, &snu, &smu)?,
        rhs: ipm_finite(&invariant, nu, mu)?,
        direct: ipm_finite(&gamma, nu, mu)?,
    })
}
