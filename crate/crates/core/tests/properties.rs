use invariant_gan::domain::{builtin_domain, project_t0, pushforward_to_domain};
use invariant_gan::experiments::instances::{example_groups, random_measure};
use invariant_gan::experiments::{read_rows_csv, write_rows_csv, SweepRow};
use invariant_gan::covering::{covering_counts, greedy_epsilon_net};
use invariant_gan::measure::{symmetrize_measure, wasserstein1_exact, EmpiricalMeasure, MASS_DENOMINATOR};
use invariant_gan::nn::{read_checkpoint, write_checkpoint};
use invariant_gan::points::dist;
use invariant_gan::{FiniteGroup, ReluNet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn groups() -> Vec<FiniteGroup> {
    example_groups().unwrap()
}

fn coords(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn actions_are_nonexpansive_and_linear(
        x2 in coords(2), y2 in coords(2), x3 in coords(3), y3 in coords(3),
        a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        for g in groups() {
            let (x, y) = if g.dim() == 2 { (&x2, &y2) } else { (&x3, &y3) };
            let combo: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            for e in g.elements() {
                let (gx, gy) = (e.apply(x).unwrap(), e.apply(y).unwrap());
                prop_assert!(dist(&gx, &gy) <= dist(x, y) + 1e-9);
                let lhs = e.apply(&combo).unwrap();
                for c in 0..lhs.len() {
                    prop_assert!((lhs[c] - (a * gx[c] + b * gy[c])).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn wasserstein_is_a_metric(seed in any::<u64>(), sizes in (1usize..6, 1usize..6, 1usize..6), d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_measure(&mut rng, sizes.0, d);
        let b = random_measure(&mut rng, sizes.1, d);
        let c = random_measure(&mut rng, sizes.2, d);
        let ab = wasserstein1_exact(&a, &b).unwrap();
        let ba = wasserstein1_exact(&b, &a).unwrap();
        let bc = wasserstein1_exact(&b, &c).unwrap();
        let ac = wasserstein1_exact(&a, &c).unwrap();
        // generic weights are rounded to a 1e-6 grid, which moves each
        // distance by at most diam * (atoms on both sides) / denominator
        let diam = 2.0 * (d as f64).sqrt();
        let slack = 3.0 * diam * (sizes.0 + sizes.1 + sizes.2) as f64 / MASS_DENOMINATOR as f64;
        prop_assert!(ab >= 0.0);
        prop_assert!(wasserstein1_exact(&a, &a).unwrap().abs() <= 1e-12);
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ac <= ab + bc + slack, "{ac} > {ab} + {bc}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn symmetrization_commutes_with_the_action(seed in any::<u64>(), n in 1usize..7, gi in 0usize..4) {
        let g = &groups()[gi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng, n, g.dim());
        let s = symmetrize_measure(g, &mu).unwrap();
        for e in g.elements() {
            let moved = mu.map_points(|p| e.apply(p).unwrap()).unwrap();
            prop_assert!(symmetrize_measure(g, &moved).unwrap().approx_eq(&s, 1e-12));
            let s_moved = s.map_points(|p| e.apply(p).unwrap()).unwrap();
            prop_assert!(s_moved.approx_eq(&s, 1e-12));
        }
    }

    #[test]
    fn projection_to_fundamental_domain(seed in any::<u64>(), which in 0usize..4) {
        let name = ["mirror_square", "disk_sector_3", "disk_sector_4", "disk_sector_6"][which];
        let spec = builtin_domain(name).unwrap();
        let g = spec.group();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = spec.sample_x0(&mut rng);
        let x = g.element(g.haar_index(&mut rng)).apply(&x0).unwrap();
        let p = project_t0(&spec, &x).unwrap();
        prop_assert!(spec.in_x0(&p.x0));
        prop_assert!(dist(&project_t0(&spec, &p.x0).unwrap().x0, &p.x0) <= 1e-12);
        for e in g.elements() {
            let q = project_t0(&spec, &e.apply(&x).unwrap()).unwrap();
            prop_assert!(dist(&q.x0, &p.x0) <= 1e-9);
        }
        let cloud: Vec<Vec<f64>> = (0..20).map(|_| spec.sample_x(&mut rng)).collect();
        let mu = EmpiricalMeasure::uniform(cloud).unwrap();
        let pushed = pushforward_to_domain(&spec, &mu).unwrap();
        prop_assert!((pushed.total_mass() - mu.total_mass()).abs() <= 1e-12);
        prop_assert!(pushed.points().iter().all(|q| spec.in_x0(q)));
    }

    #[test]
    fn greedy_nets_cover_and_shrink_monotonically(seed in any::<u64>(), n in 1usize..400, eps in 0.02f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = invariant_gan::experiments::instances::random_points(&mut rng, n, 2);
        let centers = greedy_epsilon_net(&pts, eps).unwrap();
        for p in &pts {
            let nearest = centers.iter().map(|&c| dist(p, &pts[c])).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest <= eps);
        }
        for (i, &a) in centers.iter().enumerate() {
            for &b in &centers[i + 1..] {
                prop_assert!(dist(&pts[a], &pts[b]) > eps);
            }
        }
        let report = covering_counts(&pts, &[eps / 2.0, eps, 2.0 * eps]).unwrap();
        prop_assert!(report.counts[0] >= report.counts[1] && report.counts[1] >= report.counts[2]);
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in any::<u64>(), widths in prop::collection::vec(1usize..9, 2..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ReluNet::init(&widths, None, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net, None, None).unwrap();
        let (back, header) = read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(header.widths, widths);
        let same = back.params().iter().zip(net.params()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn measure_csv_round_trips(seed in any::<u64>(), n in 1usize..20, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng, n, d);
        let mut a = Vec::new();
        mu.write_csv(&mut a).unwrap();
        let back = EmpiricalMeasure::read_csv(a.as_slice()).unwrap();
        prop_assert_eq!(&back, &mu);
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sweep_rows_round_trip(
        rows in prop::collection::vec(
            ("[a-zA-Z0-9_, \"]{1,12}", 0usize..5, 1usize..9, 1usize..5000, 0usize..20, any::<u64>(), any::<f64>(), any::<bool>()),
            0..20,
        )
    ) {
        let rows: Vec<SweepRow> = rows
            .into_iter()
            .map(|(series, replication, group_size, n, trial, seed, w1, diverged)| SweepRow {
                series, replication, group_size, n, trial, seed, w1, diverged,
            })
            .collect();
        let mut a = Vec::new();
        write_rows_csv(&rows, &mut a).unwrap();
        let back = read_rows_csv(a.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (x, y) in back.iter().zip(&rows) {
            prop_assert_eq!(&x.series, &y.series);
            if y.w1.is_nan() {
                prop_assert!(x.w1.is_nan());
            } else {
                prop_assert_eq!(x.w1.to_bits(), y.w1.to_bits());
            }
            prop_assert_eq!((x.seed, x.n, x.diverged), (y.seed, y.n, y.diverged));
        }
        let mut b = Vec::new();
        write_rows_csv(&back, &mut b).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn haar_sampling_passes_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 10_000;
    for g in groups() {
        let k = g.order();
        let mut counts = vec![0usize; k];
        for _ in 0..draws {
            counts[g.haar_index(&mut rng)] += 1;
        }
        let expected = draws as f64 / k as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((k - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat <= critical, "{}: chi2 {stat} > {critical}", g.descriptor());
    }
}
