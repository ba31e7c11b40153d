//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use invariant_gan::covering::covering_ratio_check;
use invariant_gan::domain::builtin_domain;
use invariant_gan::experiments::instances::{example_groups, net_function, random_measure, random_net, random_points};
use invariant_gan::experiments::verify::{finite_difference, relative_error};
use invariant_gan::experiments::{
    delta3_sweep, gan_comparison, gan_sweep, lowdim_ordering, lowdim_sweep, run_command, Command, ExperimentConfig,
};
use invariant_gan::measure::{
    lemma1_check, symmetrize_function, symmetrize_measure, w1_via_flow, wasserstein1_exact, EmpiricalMeasure, RealFn,
};
use invariant_gan::nn::{build_transport_map_weighted, epsilon_limit, SourceDistribution};
use invariant_gan::points::{diameter, norm, Point};
use invariant_gan::training::{default_scalings, sample_generator};
use invariant_gan::{FiniteGroup, InvariantDiscriminator, InvariantGenerator, ReluNet, SymmetrizationMode};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn planar_groups() -> Vec<FiniteGroup> {
    example_groups().unwrap().into_iter().filter(|g| g.dim() == 2).collect()
}

fn pick_group(rng: &mut ChaCha8Rng) -> FiniteGroup {
    let mut gs = example_groups().unwrap();
    let i = rng.random_range(0..gs.len());
    gs.swap_remove(i)
}

fn criterion_1() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_f: f64 = 0.0;
    let mut bad_measures = 0;
    for _ in 0..100 {
        let g = pick_group(&mut rng);
        let n = rng.random_range(1..10);
        let mu = random_measure(&mut rng, n, g.dim());
        let once = symmetrize_measure(&g, &mu).unwrap();
        let twice = symmetrize_measure(&g, &once).unwrap();
        if !twice.approx_eq(&once, TOL) {
            bad_measures += 1;
        }
        let f = net_function(random_net(&mut rng, g.dim(), 2).unwrap());
        let sf = symmetrize_function(&g, |x: &[f64]| f(x));
        let ssf = symmetrize_function(&g, &sf);
        for x in random_points(&mut rng, 20, g.dim()) {
            worst_f = worst_f.max((ssf(&x) - sf(&x)).abs());
        }
    }
    ensure(
        bad_measures == 0 && worst_f <= TOL,
        format!("measure mismatches {bad_measures}/100, function max error {worst_f:.1e}"),
    )
}

// Independent brute force: orbits expanded without merging, symmetrized
// functions averaged by hand.
fn expand(g: &FiniteGroup, mu: &EmpiricalMeasure) -> Vec<(Point, f64)> {
    let k = g.order() as f64;
    mu.points()
        .iter()
        .zip(mu.weights())
        .flat_map(|(p, &w)| g.elements().iter().map(move |e| (e.apply(p).unwrap(), w / k)))
        .collect()
}

fn integrate(f: &dyn Fn(&[f64]) -> f64, atoms: &[(Point, f64)]) -> f64 {
    atoms.iter().map(|(p, w)| w * f(p)).sum()
}

fn atoms_of(mu: &EmpiricalMeasure) -> Vec<(Point, f64)> {
    mu.points().iter().cloned().zip(mu.weights().iter().copied()).collect()
}

fn criterion_2() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_gap: f64 = 0.0;
    let mut worst_lib: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for _ in 0..100 {
        let g = pick_group(&mut rng);
        let d = g.dim();
        let mut seeds: Vec<RealFn> = (0..4).map(|_| net_function(random_net(&mut rng, d, 1).unwrap())).collect();
        seeds.push(Arc::new(|x: &[f64]| norm(x)));
        let (a, b) = (rng.random_range(1..7), rng.random_range(1..7));
        let nu = random_measure(&mut rng, a, d);
        let mu = random_measure(&mut rng, b, d);

        let averaged: Vec<Box<dyn Fn(&[f64]) -> f64>> = seeds
            .iter()
            .map(|f| {
                let (f, g) = (f.clone(), g.clone());
                Box::new(move |x: &[f64]| {
                    g.elements().iter().map(|e| f(&e.apply(x).unwrap())).sum::<f64>() / g.order() as f64
                }) as Box<dyn Fn(&[f64]) -> f64>
            })
            .collect();
        // only |x| is invariant among the seeds
        let norm_seed = seeds.last().unwrap().clone();
        let gamma: Vec<&dyn Fn(&[f64]) -> f64> =
            seeds.iter().map(|f| f.as_ref() as &dyn Fn(&[f64]) -> f64).chain(averaged.iter().map(|f| f.as_ref())).collect();
        let invariant: Vec<&dyn Fn(&[f64]) -> f64> =
            std::iter::once(norm_seed.as_ref() as &dyn Fn(&[f64]) -> f64).chain(averaged.iter().map(|f| f.as_ref())).collect();

        // signed supremum, no absolute value
        let ipm = |family: &[&dyn Fn(&[f64]) -> f64], p: &[(Point, f64)], q: &[(Point, f64)]| {
            family.iter().map(|f| integrate(f, p) - integrate(f, q)).fold(f64::NEG_INFINITY, f64::max)
        };
        let (snu, smu) = (expand(&g, &nu), expand(&g, &mu));
        let lhs = ipm(&gamma, &snu, &smu);
        let rhs = ipm(&invariant, &atoms_of(&nu), &atoms_of(&mu));
        worst_gap = worst_gap.max((lhs - rhs).abs());

        let lib = lemma1_check(&g, &seeds, &nu, &mu).unwrap();
        worst_lib = worst_lib.max((lib.lhs - lhs).abs()).max((lib.rhs - rhs).abs()).max((lib.lhs - lib.rhs).abs());

        // invariant measures: symmetrizing changes nothing
        let (inu, imu) = (symmetrize_measure(&g, &nu).unwrap(), symmetrize_measure(&g, &mu).unwrap());
        let direct = ipm(&gamma, &atoms_of(&inu), &atoms_of(&imu));
        let lib_inv = lemma1_check(&g, &seeds, &inu, &imu).unwrap();
        worst_inv = worst_inv
            .max((direct - lhs).abs())
            .max((lib_inv.direct - lib_inv.lhs).abs())
            .max((lib_inv.lhs - lib_inv.rhs).abs());
    }
    ensure(
        worst_gap <= TOL && worst_lib <= TOL && worst_inv <= TOL,
        format!("oracle gap {worst_gap:.1e}, library vs oracle {worst_lib:.1e}, invariant measures {worst_inv:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    const REL_TOL: f64 = 1e-6;
    const FLOOR_FACTOR: f64 = 2.0;
    const HALF: usize = 1000;
    const PAIRS: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for g in example_groups().unwrap() {
        for mode in [SymmetrizationMode::OrbitAverage, SymmetrizationMode::InputAverage] {
            let base = ReluNet::init(&[g.dim(), 16, 16, 1], Some(0.5), &mut rng).unwrap();
            let disc = InvariantDiscriminator::new(base, g.clone(), mode).unwrap();
            let xs = random_points(&mut rng, 1000, g.dim());
            let values: Vec<f64> = xs.iter().map(|x| disc.forward(x).unwrap()).collect();
            // relative to the critic's output scale on this batch
            let scale = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
            for (x, &fx) in xs.iter().zip(&values) {
                for e in g.elements() {
                    let fy = disc.forward(&e.apply(x).unwrap()).unwrap();
                    let denom = fx.abs().max(fy.abs()).max(scale).max(f64::MIN_POSITIVE);
                    worst = worst.max((fx - fy).abs() / denom);
                }
            }
        }
    }
    let mut worst_ratio: f64 = 0.0;
    for g in example_groups().unwrap() {
        let base = ReluNet::init(&[1, 16, 16, g.dim()], None, &mut rng).unwrap();
        let gen = InvariantGenerator::new(base, g.clone()).unwrap();
        let pairs: Vec<(EmpiricalMeasure, Vec<Point>)> = (0..PAIRS)
            .map(|_| {
                let s = sample_generator(&gen, &SourceDistribution::default(), 2 * HALF, &mut rng);
                (EmpiricalMeasure::uniform(s[..HALF].to_vec()).unwrap(), s[HALF..].to_vec())
            })
            .collect();
        let mean_w1 = |e: &invariant_gan::GroupElement| {
            pairs
                .iter()
                .map(|(a, b)| {
                    let moved: Vec<Point> = b.iter().map(|p| e.apply(p).unwrap()).collect();
                    w1_via_flow(a, &EmpiricalMeasure::uniform(moved).unwrap()).unwrap()
                })
                .sum::<f64>()
                / PAIRS as f64
        };
        let floor = mean_w1(g.element(g.identity_index()));
        for e in g.elements() {
            worst_ratio = worst_ratio.max(mean_w1(e) / floor);
        }
    }
    ensure(
        worst <= REL_TOL && worst_ratio <= FLOOR_FACTOR,
        format!("discriminator max relative deviation {worst:.1e}, generator W1 / floor max {worst_ratio:.3}"),
    )
}

fn criterion_4() -> Outcome {
    const LATENTS: usize = 100_000;
    const SUBSAMPLE: usize = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let source = SourceDistribution::default();
    let groups = planar_groups();
    let mut failures = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..20 {
        let g = groups[rng.random_range(0..groups.len())].clone();
        let n = rng.random_range(2..=20);
        let pts: Vec<Point> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let atoms = EmpiricalMeasure::uniform(pts).unwrap();
        let eps = 0.05 * epsilon_limit(atoms.points(), atoms.weights()).unwrap();
        let map = build_transport_map_weighted(atoms.points(), atoms.weights(), |u| source.quantile(u), eps).unwrap();
        let pushed: Vec<Point> = (0..LATENTS).map(|_| map.eval(source.sample(&mut rng))).collect();
        let sub: Vec<Point> = sample_indices(&mut rng, LATENTS, SUBSAMPLE).into_iter().map(|i| pushed[i].clone()).collect();
        let lhs = symmetrize_measure(&g, &EmpiricalMeasure::uniform(sub).unwrap().merged(1e-12)).unwrap();
        let rhs = symmetrize_measure(&g, &atoms).unwrap();
        let w = wasserstein1_exact(&lhs, &rhs).unwrap();
        let bound = eps + 0.02 * diameter(atoms.points());
        worst_margin = worst_margin.max(w - bound);
        if w > bound {
            failures += 1;
        }
    }
    ensure(failures == 0, format!("{failures}/20 over bound, worst W1 - bound {worst_margin:.2e}"))
}

fn criterion_5() -> Outcome {
    const TOL: f64 = 1e-4;
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    let mut nets = 0;
    for i in 0..12 {
        let d = 1 + i % 3;
        let net = random_net(&mut rng, d, 1 + i % 3).unwrap();
        let x = random_points(&mut rng, 1, d).remove(0);
        let (grad, _) = net.backward(&x, &[1.0]).unwrap();
        let fd = finite_difference(net.params(), H, |p| net.clone().with_params(p.to_vec()).unwrap().forward(&x).unwrap()[0]);
        worst = worst.max(relative_error(&grad, &fd));
        nets += 1;
    }
    for (i, g) in example_groups().unwrap().into_iter().enumerate() {
        for mode in [SymmetrizationMode::OrbitAverage, SymmetrizationMode::InputAverage] {
            for rep in 0..2 {
                let base = random_net(&mut rng, g.dim(), 2).unwrap();
                let disc = InvariantDiscriminator::new(base.clone(), g.clone(), mode).unwrap();
                let x = random_points(&mut rng, 1, g.dim()).remove(0);
                let (grad, _) = disc.gradients(&x).unwrap();
                let fd = finite_difference(base.params(), H, |p| {
                    let moved = InvariantDiscriminator::new(base.clone().with_params(p.to_vec()).unwrap(), g.clone(), mode).unwrap();
                    moved.forward(&x).unwrap()
                });
                let err = relative_error(&grad, &fd);
                if err > TOL {
                    eprintln!("  group #{i} {mode:?} rep {rep}: relative error {err:.2e}");
                }
                worst = worst.max(err);
                nets += 1;
            }
        }
    }
    ensure(nets >= 20 && worst <= TOL, format!("{nets} nets, max relative error {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    const EPSILON: f64 = 0.05;
    const SLACK: f64 = 1.15;
    const CLOUD: usize = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["disk_sector_4", "mirror_square"] {
        let spec = builtin_domain(name).unwrap();
        let r = covering_ratio_check(&spec, EPSILON, CLOUD, &mut rng).unwrap();
        let bound = SLACK / spec.group().order() as f64;
        ok &= r.ratio <= bound;
        parts.push(format!("{name} {:.4} <= {bound:.4}", r.ratio));
    }
    ensure(ok, parts.join(", "))
}

fn criterion_7() -> Outcome {
    const SLOPE: (f64, f64) = (-0.65, -0.35);
    const COLLAPSE: (f64, f64) = (0.6, 1.6);
    let cfg = ExperimentConfig {
        workers: 1,
        ..ExperimentConfig::default()
    };
    let res = delta3_sweep(&cfg).map_err(|e| e.to_string())?;
    let mut ok = res.fits.len() == 8;
    let mut slopes = Vec::new();
    for f in &res.fits {
        let s = f.fit.map(|x| x.slope).unwrap_or(f64::NAN);
        ok &= (SLOPE.0..=SLOPE.1).contains(&s);
        slopes.push(format!("{} {s:.3}", f.series));
    }
    let median = res.collapse.as_ref().and_then(|c| c.median).unwrap_or(f64::NAN);
    ok &= (COLLAPSE.0..=COLLAPSE.1).contains(&median);
    ensure(ok, format!("slopes [{}], collapse median {median:.3}", slopes.join(", ")))
}

fn criterion_8() -> Outcome {
    const CIRCLE: (f64, f64) = (-0.65, -0.35);
    const BALL: (f64, f64) = (-0.45, -0.22);
    let cfg = ExperimentConfig::default();
    let res = lowdim_sweep(&cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for f in &res.fits {
        let s = f.fit.map(|x| x.slope).unwrap_or(f64::NAN);
        let range = if f.series == "circle_r3" { CIRCLE } else { BALL };
        ok &= (range.0..=range.1).contains(&s);
        parts.push(format!("{} r{} {s:.3}", f.series, f.replication));
    }
    let ordering = lowdim_ordering(&res.fits, &cfg.lowdim_targets);
    ok &= ordering.len() == cfg.lowdim_replications && ordering.iter().all(|&o| o);
    ensure(ok, format!("slopes [{}], ordering {ordering:?}", parts.join(", ")))
}

fn criterion_9() -> Outcome {
    let m_min = default_scalings(100, 2, 1.0).map_err(|e| e.to_string())?.m_min;
    let expected = (1e6 * 100f64.ln().powi(3)).ceil() as u64;
    if m_min != expected {
        return Err(format!("m_min {m_min}, expected {expected}"));
    }
    let res = gan_sweep(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let c = gan_comparison(&res.rows);
    let (inv, van, floor) = (
        c.median_invariant.unwrap_or(f64::NAN),
        c.median_vanilla.unwrap_or(f64::NAN),
        c.median_floor.unwrap_or(f64::NAN),
    );
    let ok = inv <= van && inv >= 0.5 * floor && van >= 0.5 * floor && c.above_half_floor;
    ensure(
        ok,
        format!("median W1 invariant {inv:.4}, vanilla {van:.4}, floor {floor:.4}, m_min {m_min}"),
    )
}

fn run_csv(cmd: Command, cfg: &ExperimentConfig) -> Result<Vec<u8>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_command(cmd, cfg, dir.path()).map_err(|e| e.to_string())?;
    fs::read(dir.path().join("results.csv")).map_err(|e| e.to_string())
}

fn criterion_10() -> Outcome {
    let mut small = ExperimentConfig {
        seed: 99,
        n_grid: vec![50, 100, 200],
        trials: 2,
        reference_size: 400,
        lowdim_replications: 2,
        gan_n: 40,
        gan_seeds: 2,
        gan_gen_steps: 40,
        gan_eval_samples: 200,
        ..ExperimentConfig::default()
    };
    small.set("delta3.groups", "C1,C4").map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for cmd in [Command::Delta3Sweep, Command::Lowdim, Command::GanSweep] {
        let one = ExperimentConfig { workers: 1, ..small.clone() };
        let two = ExperimentConfig { workers: 2, ..small.clone() };
        let a = run_csv(cmd, &one)?;
        let b = run_csv(cmd, &one)?;
        let c = run_csv(cmd, &two)?;
        let same = a == b && a == c && !a.is_empty();
        ok &= same;
        parts.push(format!("{cmd} {}", if same { "identical" } else { "differs" }));
    }
    ensure(ok, parts.join(", "))
}

fn main() {
    let criteria: [(fn() -> Outcome, Duration); 10] = [
        (criterion_1, Duration::from_secs(5)),
        (criterion_2, Duration::from_secs(30)),
        (criterion_3, Duration::from_secs(60)),
        (criterion_4, Duration::from_secs(120)),
        (criterion_5, Duration::from_secs(30)),
        (criterion_6, Duration::from_secs(60)),
        (criterion_7, Duration::from_secs(600)),
        (criterion_8, Duration::from_secs(600)),
        (criterion_9, Duration::from_secs(1800)),
        (criterion_10, Duration::from_secs(600)),
    ];
    // optional criterion numbers on the command line select a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (run, budget)) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let (passed, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {}: {} ({:.1}s of {}s{}) {detail}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" },
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all selected criteria passed");
}
