//! Self-checks over every module, grouped into named suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Fault};
use super::instances::{example_groups, net_function, random_group, random_measure, random_net, random_points};
use crate::covering::covering_ratio_check;
use crate::domain::{builtin_domain, project_t0, pushforward_to_domain};
use crate::error::{Error, Result};
use crate::group::{verify_group_axioms, FiniteGroup};
use crate::measure::{lemma1_check, symmetrize_function, symmetrize_measure, wasserstein1_exact, EmpiricalMeasure, RealFn};
use crate::nn::{
    build_transport_map_weighted, epsilon_limit, InvariantDiscriminator, InvariantGenerator, ReluNet,
    SourceDistribution, SymmetrizationMode,
};
use crate::points::{diameter, dist, Point};
use crate::seeds::mix_seed;
use crate::training::generator_loss_and_grad;

pub const SUITES: &[&str] = &["group", "invariance", "idempotence", "lemma1", "transport", "gradients", "covering"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// `None` when the suite did not run.
    pub fn suite_passed(&self, suite: &str) -> Option<bool> {
        let mut it = self.checks.iter().filter(|c| c.suite == suite).peekable();
        it.peek()?;
        Some(it.all(|c| c.passed))
    }

    pub fn suites(&self) -> Vec<(String, bool)> {
        let mut out: Vec<(String, bool)> = Vec::new();
        for c in &self.checks {
            match out.iter_mut().find(|(s, _)| *s == c.suite) {
                Some(entry) => entry.1 &= c.passed,
                None => out.push((c.suite.clone(), c.passed)),
            }
        }
        out
    }
}

struct Suite<'a> {
    name: &'a str,
    out: Vec<CheckResult>,
}

impl Suite<'_> {
    fn check(&mut self, check: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(CheckResult {
            suite: self.name.to_string(),
            check: check.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Records an error as a failed check instead of aborting the run.
    fn attempt(&mut self, check: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        if let Err(e) = f(self) {
            self.check(check, false, format!("error: {e}"));
        }
    }
}

/// Runs the suites named in `verify.suites` (all when empty).
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let selected: Vec<&str> = if cfg.verify_suites.is_empty() {
        SUITES.to_vec()
    } else {
        for s in &cfg.verify_suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(Error::Config(format!("unknown suite `{s}`; known: {}", SUITES.join(", "))));
            }
        }
        SUITES.iter().copied().filter(|s| cfg.verify_suites.iter().any(|x| x == s)).collect()
    };
    let mut checks = Vec::new();
    for name in selected {
        let idx = SUITES.iter().position(|s| *s == name).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[idx as u64]));
        let mut suite = Suite { name, out: Vec::new() };
        match name {
            "group" => group_suite(&mut suite, cfg.verify_fault, &mut rng),
            "invariance" => invariance_suite(&mut suite, &mut rng),
            "idempotence" => idempotence_suite(&mut suite, &mut rng),
            "lemma1" => lemma1_suite(&mut suite, &mut rng),
            "transport" => transport_suite(&mut suite, &mut rng),
            "gradients" => gradient_suite(&mut suite, &mut rng),
            _ => covering_suite(&mut suite, cfg, &mut rng),
        }
        checks.extend(suite.out);
    }
    Ok(VerifyReport { checks })
}

fn group_suite(s: &mut Suite, fault: Fault, rng: &mut ChaCha8Rng) {
    s.attempt("construct", |s| {
        for mut g in example_groups()? {
            let label = g.descriptor().to_string();
            if fault == Fault::Cayley {
                let wrong = (g.product(1, 1) + 1) % g.order();
                g.corrupt_cayley_entry(1, 1, wrong);
            }
            let report = verify_group_axioms(&g);
            s.check(format!("axioms {label}"), report.passed(), format!("{:?}", report));

            let mut worst_lip: f64 = 0.0;
            let mut worst_lin: f64 = 0.0;
            for _ in 0..1000 {
                let x = random_points(rng, 2, g.dim());
                let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let combo: Point = x[0].iter().zip(&x[1]).map(|(p, q)| a * p + b * q).collect();
                for e in g.elements() {
                    let (y0, y1) = (e.apply(&x[0])?, e.apply(&x[1])?);
                    worst_lip = worst_lip.max(dist(&y0, &y1) - dist(&x[0], &x[1]));
                    let lhs = e.apply(&combo)?;
                    for c in 0..lhs.len() {
                        worst_lin = worst_lin.max((lhs[c] - (a * y0[c] + b * y1[c])).abs());
                    }
                }
            }
            s.check(format!("lipschitz {label}"), worst_lip <= 1e-9, format!("max excess {worst_lip:e}"));
            s.check(format!("linearity {label}"), worst_lin <= 1e-12, format!("max error {worst_lin:e}"));
        }
        Ok(())
    });
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0f64).max(a.abs()).max(b.abs())
}

fn invariance_suite(s: &mut Suite, rng: &mut ChaCha8Rng) {
    s.attempt("discriminators", |s| {
        for g in example_groups()? {
            for mode in [SymmetrizationMode::OrbitAverage, SymmetrizationMode::InputAverage] {
                let base = ReluNet::init(&[g.dim(), 8, 8, 1], Some(0.5), rng)?;
                let disc = InvariantDiscriminator::new(base, g.clone(), mode)?;
                let mut worst: f64 = 0.0;
                for x in random_points(rng, 200, g.dim()) {
                    let fx = disc.forward(&x)?;
                    for e in g.elements() {
                        worst = worst.max(rel(disc.forward(&e.apply(&x)?)?, fx));
                    }
                }
                s.check(
                    format!("orbit-constant {mode:?} {}", g.descriptor()),
                    worst <= 1e-6,
                    format!("max relative deviation {worst:e}"),
                );
            }
        }
        Ok(())
    });
    s.attempt("generator", |s| {
        for g in example_groups()? {
            let base = ReluNet::init(&[1, 8, 8, g.dim()], None, rng)?;
            let gen = InvariantGenerator::new(base, g.clone())?;
            // exact law for a latent grid: each (z, sigma) with equal mass
            let pts: Vec<Point> = (0..50)
                .flat_map(|i| {
                    let z = (i as f64 + 0.5) / 50.0;
                    (0..g.order()).map(move |t| (z, t))
                })
                .map(|(z, t)| gen.generate_with(z, t))
                .collect();
            let law = EmpiricalMeasure::uniform(pts)?;
            let sym = symmetrize_measure(&g, &law)?;
            s.check(
                format!("generator law invariant {}", g.descriptor()),
                sym.approx_eq(&law, 1e-9),
                "",
            );
        }
        Ok(())
    });
}

fn idempotence_suite(s: &mut Suite, rng: &mut ChaCha8Rng) {
    s.attempt("symmetrization", |s| {
        let mut worst_f: f64 = 0.0;
        let mut measures_ok = true;
        for _ in 0..20 {
            let g = random_group(rng)?;
            let n = rng.random_range(1..8);
            let mu = random_measure(rng, n, g.dim());
            let once = symmetrize_measure(&g, &mu)?;
            let twice = symmetrize_measure(&g, &once)?;
            measures_ok &= twice.approx_eq(&once, 1e-12);
            let f = net_function(random_net(rng, g.dim(), 2)?);
            let sf = symmetrize_function(&g, |x: &[f64]| f(x));
            let ssf = symmetrize_function(&g, &sf);
            for x in random_points(rng, 20, g.dim()) {
                worst_f = worst_f.max((ssf(&x) - sf(&x)).abs());
            }
        }
        s.check("measure projection", measures_ok, "");
        s.check("function projection", worst_f <= 1e-12, format!("max error {worst_f:e}"));
        Ok(())
    });
    s.attempt("projection to X0", |s| {
        for name in ["mirror_square", "disk_sector_4"] {
            let spec = builtin_domain(name)?;
            let g = spec.group();
            let mut ok = true;
            let mut pts = Vec::new();
            for _ in 0..200 {
                let x0 = spec.sample_x0(rng);
                let t = rng.random_range(0..g.order());
                let x = g.element(t).apply(&x0)?;
                let p = project_t0(&spec, &x)?;
                let again = project_t0(&spec, &p.x0)?;
                ok &= dist(&again.x0, &p.x0) <= 1e-12;
                ok &= dist(&g.element(p.sigma).apply(&p.x0)?, &x) <= 1e-9;
                for e in g.elements() {
                    ok &= dist(&project_t0(&spec, &e.apply(&x)?)?.x0, &p.x0) <= 1e-9;
                }
                pts.push(x);
            }
            let mu = EmpiricalMeasure::uniform(pts)?;
            let pushed = pushforward_to_domain(&spec, &mu)?;
            ok &= (pushed.total_mass() - 1.0).abs() <= 1e-12 && pushed.points().iter().all(|p| spec.in_x0(p));
            s.check(format!("T0 {name}"), ok, "idempotent, orbit-constant, mass preserving");
        }
        Ok(())
    });
}

fn lemma1_suite(s: &mut Suite, rng: &mut ChaCha8Rng) {
    s.attempt("battery", |s| {
        let mut worst: f64 = 0.0;
        let mut worst_inv: f64 = 0.0;
        for i in 0..20 {
            let g = random_group(rng)?;
            let d = g.dim();
            let family: Vec<RealFn> = (0..4)
                .map(|_| random_net(rng, d, 1).map(net_function))
                .collect::<Result<_>>()?;
            let (a, b) = (rng.random_range(1..6), rng.random_range(1..6));
            let nu = random_measure(rng, a, d);
            let mu = random_measure(rng, b, d);
            let r = lemma1_check(&g, &family, &nu, &mu)?;
            worst = worst.max((r.lhs - r.rhs).abs());
            if i % 2 == 0 {
                let (snu, smu) = (symmetrize_measure(&g, &nu)?, symmetrize_measure(&g, &mu)?);
                let r = lemma1_check(&g, &family, &snu, &smu)?;
                worst_inv = worst_inv.max((r.direct - r.lhs).abs()).max((r.lhs - r.rhs).abs());
            }
        }
        s.check("symmetrized equals invariant family", worst <= 1e-9, format!("max gap {worst:e}"));
        s.check("invariant measures", worst_inv <= 1e-9, format!("max gap {worst_inv:e}"));
        Ok(())
    });
}

/// W1 between the map's pushforward of a stratified latent grid (symmetrized)
/// and the symmetrized atoms, with the admissible bound.
pub fn transport_error(
    g: &FiniteGroup,
    atoms: &EmpiricalMeasure,
    epsilon: f64,
    latent_points: usize,
) -> Result<(f64, f64)> {
    let source = SourceDistribution::default();
    let map = build_transport_map_weighted(atoms.points(), atoms.weights(), |u| source.quantile(u), epsilon)?;
    let pushed: Vec<Point> = (0..latent_points)
        .map(|j| map.eval(source.quantile((j as f64 + 0.5) / latent_points as f64)))
        .collect();
    let lhs = symmetrize_measure(g, &EmpiricalMeasure::uniform(pushed)?.merged(1e-12))?;
    let rhs = symmetrize_measure(g, atoms)?;
    let w = wasserstein1_exact(&lhs, &rhs)?;
    let bound = epsilon + 0.02 * diameter(atoms.points()).max(f64::MIN_POSITIVE);
    Ok((w, bound))
}

fn transport_suite(s: &mut Suite, rng: &mut ChaCha8Rng) {
    s.attempt("construction", |s| {
        let source = SourceDistribution::default();
        for case in 0..5 {
            let g = random_group(rng)?;
            let n = rng.random_range(2..=12);
            let atoms = EmpiricalMeasure::uniform(random_points(rng, n, g.dim()))?;
            let eps = 0.05 * epsilon_limit(atoms.points(), atoms.weights())?;
            let map = build_transport_map_weighted(atoms.points(), atoms.weights(), |u| source.quantile(u), eps)?;
            let hits = (0..map.targets().len()).all(|i| map.eval(map.plateau_midpoint(i)) == map.targets()[i]);
            s.check(format!("plateaus hit atoms #{case}"), hits, "");
            let net = map.to_relu_net()?;
            let mut worst: f64 = 0.0;
            for j in 0..=400 {
                let z = -0.2 + 1.4 * j as f64 / 400.0;
                let (a, b) = (map.eval(z), net.forward(&[z])?);
                worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
            }
            s.check(format!("ReLU realization #{case}"), worst <= 1e-9, format!("max error {worst:e}"));
            let (w, bound) = transport_error(&g, &atoms, eps, 2000)?;
            s.check(format!("pushforward W1 #{case}"), w <= bound, format!("W1 {w:.3e} bound {bound:.3e}"));
        }
        Ok(())
    });
}

/// Scale below which gradients count as zero in [`relative_error`].
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, GRADIENT_FLOOR)` in the Euclidean norm. The floor
/// keeps structurally zero gradients (rounding noise against exact zeros)
/// from reading as relative error 1.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(GRADIENT_FLOOR)
}

/// Central differences of `f` in every coordinate of `params`.
pub fn finite_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradient_suite(s: &mut Suite, rng: &mut ChaCha8Rng) {
    const H: f64 = 1e-6;
    s.attempt("backprop", |s| {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let d = rng.random_range(1..4);
            let depth = rng.random_range(1..4);
            let net = random_net(rng, d, depth)?;
            let x = random_points(rng, 1, d).remove(0);
            let (gp, gx) = net.backward(&x, &[1.0])?;
            let fd = finite_difference(net.params(), H, |p| {
                net.clone().with_params(p.to_vec()).expect("same size").forward(&x).expect("dim")[0]
            });
            let fdx = finite_difference(&x, H, |y| net.forward(y).expect("dim")[0]);
            worst = worst.max(relative_error(&gp, &fd)).max(relative_error(&gx, &fdx));
        }
        s.check("plain nets", worst <= 1e-4, format!("max relative error {worst:e}"));
        Ok(())
    });
    s.attempt("invariant discriminator", |s| {
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            let g = random_group(rng)?;
            let mode = if i % 2 == 0 { SymmetrizationMode::OrbitAverage } else { SymmetrizationMode::InputAverage };
            let disc = InvariantDiscriminator::new(random_net(rng, g.dim(), 2)?, g.clone(), mode)?;
            let x = random_points(rng, 1, g.dim()).remove(0);
            let (gp, gx) = disc.gradients(&x)?;
            let fd = finite_difference(disc.base().params(), H, |p| {
                let base = disc.base().clone().with_params(p.to_vec()).expect("same size");
                InvariantDiscriminator::new(base, g.clone(), mode).expect("valid").forward(&x).expect("dim")
            });
            let fdx = finite_difference(&x, H, |y| disc.forward(y).expect("dim"));
            worst = worst.max(relative_error(&gp, &fd)).max(relative_error(&gx, &fdx));
        }
        s.check("orbit and input averaging", worst <= 1e-4, format!("max relative error {worst:e}"));
        Ok(())
    });
    s.attempt("generator", |s| {
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let g = random_group(rng)?;
            let d = g.dim();
            let disc = InvariantDiscriminator::new(random_net(rng, d, 2)?, g.clone(), SymmetrizationMode::OrbitAverage)?;
            let gen = InvariantGenerator::new(ReluNet::init(&[1, 6, 6, d], None, rng)?, g.clone())?;
            let zs: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let sig: Vec<usize> = (0..8).map(|_| g.haar_index(rng)).collect();
            let (_, grad) = generator_loss_and_grad(&gen, &disc, &zs, &sig);
            let fd = finite_difference(gen.base().params(), H, |p| {
                let base = gen.base().clone().with_params(p.to_vec()).expect("same size");
                let gen = InvariantGenerator::new(base, g.clone()).expect("valid");
                generator_loss_and_grad(&gen, &disc, &zs, &sig).0
            });
            worst = worst.max(relative_error(&grad, &fd));
        }
        s.check("generator loss", worst <= 1e-3, format!("max relative error {worst:e}"));
        Ok(())
    });
}

fn covering_suite(s: &mut Suite, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) {
    let mut names = vec!["disk_sector_4".to_string(), "mirror_square".to_string()];
    if !names.contains(&cfg.domain_name) {
        names.push(cfg.domain_name.clone());
    }
    for name in names {
        s.attempt(&format!("ratio {name}"), |s| {
            let spec = builtin_domain(&name)?;
            let r = covering_ratio_check(&spec, cfg.covering_ratio_epsilon, cfg.covering_cloud_size, rng)?;
            let bound = 1.15 / spec.group().order() as f64;
            s.check(
                format!("ratio {name}"),
                r.ratio <= bound,
                format!("N(X0)={} N(X)={} ratio {:.4} bound {bound:.4}", r.n_x0, r.n_x, r.ratio),
            );
            Ok(())
        });
    }
}
