//! Scaling sweeps: the Δ3 target-sampling term per group, its low-dimensional
//! variant and end-to-end GAN runs.
//!
//! Seeds: cell `(i, j, ...)` of a sweep with master seed `s` uses
//! `mix_seed(s, &[i, j, ...])`; reference draw `r` uses
//! `mix_seed(s, &[REFERENCE_STREAM, ..., r])`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{parse_group_label, ExperimentConfig};
use super::fit::{median, rate_fit, RateFit};
use super::run_cells;
use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupDescriptor};
use crate::measure::{w1_via_flow, wasserstein1_exact, wasserstein1_quotient, EmpiricalMeasure, EXACT_OT_CAP};
use crate::seeds::mix_seed;
use crate::targets::{builtin_target, Target};
use crate::training::{sample_generator, train_gan, RunRecord, RunSeeds, TrainConfig};

pub const REFERENCE_STREAM: u64 = 1 << 32;
/// Stream for the generated samples scored against the reference.
pub const EVAL_STREAM: u64 = (1 << 32) + 1;

/// One measured cell. Columns of `results.csv` in this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Group label, target name or GAN arm.
    pub series: String,
    pub replication: usize,
    pub group_size: usize,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    /// `NaN` when the cell diverged.
    pub w1: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    pub series: String,
    pub replication: usize,
    pub group_size: usize,
    /// `None` with fewer than three usable sample sizes.
    pub fit: Option<RateFit>,
    /// Mean W1 per sample size over the non-diverged trials.
    pub means: Vec<(usize, f64)>,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseCell {
    pub series: String,
    pub group_size: usize,
    pub n: usize,
    pub err_group: f64,
    pub err_trivial: f64,
    pub ratio: f64,
}

/// `err(|G| = k, n) / err(|G| = 1, k n)` on every cell where `k n` is also on
/// the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseStats {
    pub cells: Vec<CollapseCell>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceFloor {
    pub series: String,
    pub replication: usize,
    /// W1 between two independent raw reference draws.
    pub w1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub fits: Vec<SeriesFit>,
    pub collapse: Option<CollapseStats>,
    pub reference_floor: Vec<ReferenceFloor>,
    /// Diverged cells left out of every fit.
    pub excluded: usize,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(["series", "replication", "group_size", "n", "trial", "seed", "w1", "diverged"])?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}

/// Per `(series, replication)` power-law fits of the mean W1 against `n`, in
/// order of first appearance.
pub fn fit_series(rows: &[SweepRow]) -> Vec<SeriesFit> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut cells: BTreeMap<(String, usize), (usize, BTreeMap<usize, Vec<f64>>, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.series.clone(), r.replication);
        let entry = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (r.group_size, BTreeMap::new(), 0)
        });
        if r.diverged || !r.w1.is_finite() {
            entry.2 += 1;
        } else {
            entry.1.entry(r.n).or_default().push(r.w1);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (group_size, by_n, excluded) = &cells[&key];
            let means: Vec<(usize, f64)> = by_n
                .iter()
                .map(|(&n, v)| (n, v.iter().sum::<f64>() / v.len() as f64))
                .collect();
            let pairs: Vec<(f64, f64)> = means.iter().map(|&(n, e)| (n as f64, e)).collect();
            SeriesFit {
                series: key.0,
                replication: key.1,
                group_size: *group_size,
                fit: rate_fit(&pairs).ok(),
                means,
                excluded: *excluded,
            }
        })
        .collect()
}

/// Collapse ratios against the `group_size == 1` series of the same
/// replication.
pub fn collapse_stats(fits: &[SeriesFit]) -> CollapseStats {
    let mut cells = Vec::new();
    for base in fits.iter().filter(|f| f.group_size == 1) {
        let base_means: BTreeMap<usize, f64> = base.means.iter().copied().collect();
        for f in fits.iter().filter(|f| f.group_size > 1 && f.replication == base.replication) {
            for &(n, err) in &f.means {
                if let Some(&triv) = base_means.get(&(f.group_size * n)) {
                    cells.push(CollapseCell {
                        series: f.series.clone(),
                        group_size: f.group_size,
                        n,
                        err_group: err,
                        err_trivial: triv,
                        ratio: err / triv,
                    });
                }
            }
        }
    }
    let ratios: Vec<f64> = cells.iter().map(|c| c.ratio).collect();
    CollapseStats {
        median: median(&ratios),
        cells,
    }
}

fn sample_measure(target: &Target, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmpiricalMeasure::uniform(target.sample_n(n, &mut rng))
}

fn check_grid(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.n_grid.is_empty() || cfg.n_grid.contains(&0) || cfg.trials == 0 {
        return Err(Error::Config("n grid and trial count must be positive".into()));
    }
    let biggest = cfg.n_grid.iter().copied().max().unwrap_or(0).max(cfg.reference_size);
    if biggest > EXACT_OT_CAP {
        return Err(Error::Config(format!(
            "exact-OT cap exceeded: {biggest} atoms per side, cap is {EXACT_OT_CAP}"
        )));
    }
    if cfg.reference_size == 0 {
        return Err(Error::Config("reference size must be positive".into()));
    }
    Ok(())
}

fn target_or(cfg: &ExperimentConfig, default: &str) -> Result<Target> {
    let name = cfg.target.as_deref().unwrap_or(default);
    builtin_target(name).map_err(|_| Error::Config(format!("unknown target `{name}`")))
}

fn checked_group(target: &Target, desc: &GroupDescriptor) -> Result<FiniteGroup> {
    let g = desc
        .build()
        .map_err(|e| Error::Config(format!("group {desc}: {e}")))?;
    if !target.is_invariant_under(&g) {
        return Err(Error::Config(format!("target {} is not invariant under {desc}", target.name)));
    }
    Ok(g)
}

fn reference_floor(target: &Target, size: usize, reference: &EmpiricalMeasure, seed: u64) -> Result<f64> {
    let other = sample_measure(target, size, seed)?;
    w1_via_flow(reference, &other)
}

/// W1 between the symmetrized sample and the symmetrized reference.
pub fn delta3_cell(g: &FiniteGroup, sample: &EmpiricalMeasure, reference: &EmpiricalMeasure) -> Result<f64> {
    wasserstein1_quotient(g, sample, reference)
}

/// For every group, sample size and trial: draw `n` target samples,
/// symmetrize and measure exact W1 against the symmetrized reference. Data
/// seeds depend only on `(n index, trial)`, so every group sees the same
/// samples.
pub fn delta3_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    check_grid(cfg)?;
    let target = target_or(cfg, "ring_mixture")?;
    let mut groups = Vec::new();
    for label in &cfg.delta3_groups {
        let desc = parse_group_label(label, target.dim)?;
        groups.push((desc.to_string(), checked_group(&target, &desc)?));
    }
    if groups.is_empty() {
        return Err(Error::Config("delta3.groups is empty".into()));
    }
    let reference = sample_measure(&target, cfg.reference_size, mix_seed(cfg.seed, &[REFERENCE_STREAM, 0]))?;

    let mut cells = Vec::new();
    for gi in 0..groups.len() {
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            for t in 0..cfg.trials {
                cells.push((gi, ni, n, t, mix_seed(cfg.seed, &[ni as u64, t as u64])));
            }
        }
    }
    let rows = run_cells(cfg.workers, &cells, |&(gi, _, n, t, seed)| {
        let (label, g) = &groups[gi];
        let sample = sample_measure(&target, n, seed)?;
        Ok(SweepRow {
            series: label.clone(),
            replication: 0,
            group_size: g.order(),
            n,
            trial: t,
            seed,
            w1: delta3_cell(g, &sample, &reference)?,
            diverged: false,
        })
    })?;
    let mut floors = Vec::new();
    if cfg.reference_floor {
        floors.push(ReferenceFloor {
            series: "reference".into(),
            replication: 0,
            w1: reference_floor(&target, cfg.reference_size, &reference, mix_seed(cfg.seed, &[REFERENCE_STREAM, 1]))?,
        });
    }
    let fits = fit_series(&rows);
    let collapse = collapse_stats(&fits);
    Ok(SweepResult {
        excluded: fits.iter().map(|f| f.excluded).sum(),
        rows,
        fits,
        collapse: Some(collapse),
        reference_floor: floors,
        records: Vec::new(),
    })
}

/// Δ3 sweep with the trivial group on each low-dimensional target, repeated
/// with an independent reference per replication.
pub fn lowdim_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    check_grid(cfg)?;
    if cfg.lowdim_replications == 0 || cfg.lowdim_targets.is_empty() {
        return Err(Error::Config("lowdim needs targets and at least one replication".into()));
    }
    let targets = cfg
        .lowdim_targets
        .iter()
        .map(|name| builtin_target(name).map_err(|_| Error::Config(format!("unknown target `{name}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut references = Vec::new();
    for (ti, target) in targets.iter().enumerate() {
        for r in 0..cfg.lowdim_replications {
            let seed = mix_seed(cfg.seed, &[REFERENCE_STREAM, ti as u64, r as u64]);
            references.push(sample_measure(target, cfg.reference_size, seed)?);
        }
    }
    let mut cells = Vec::new();
    for ti in 0..targets.len() {
        for r in 0..cfg.lowdim_replications {
            for (ni, &n) in cfg.n_grid.iter().enumerate() {
                for t in 0..cfg.trials {
                    cells.push((ti, r, n, t, mix_seed(cfg.seed, &[ti as u64, r as u64, ni as u64, t as u64])));
                }
            }
        }
    }
    let rows = run_cells(cfg.workers, &cells, |&(ti, r, n, t, seed)| {
        let sample = sample_measure(&targets[ti], n, seed)?;
        let reference = &references[ti * cfg.lowdim_replications + r];
        Ok(SweepRow {
            series: targets[ti].name.clone(),
            replication: r,
            group_size: 1,
            n,
            trial: t,
            seed,
            w1: wasserstein1_exact(&sample, reference)?,
            diverged: false,
        })
    })?;
    let mut floors = Vec::new();
    if cfg.reference_floor {
        for (ti, target) in targets.iter().enumerate() {
            let seed = mix_seed(cfg.seed, &[REFERENCE_STREAM, ti as u64, u64::MAX]);
            floors.push(ReferenceFloor {
                series: target.name.clone(),
                replication: 0,
                w1: reference_floor(target, cfg.reference_size, &references[ti * cfg.lowdim_replications], seed)?,
            });
        }
    }
    let fits = fit_series(&rows);
    Ok(SweepResult {
        excluded: fits.iter().map(|f| f.excluded).sum(),
        rows,
        fits,
        collapse: None,
        reference_floor: floors,
        records: Vec::new(),
    })
}

/// Per replication, whether the slopes strictly increase in target order
/// (for the defaults: the circle decays faster than the ball).
pub fn lowdim_ordering(fits: &[SeriesFit], targets: &[String]) -> Vec<bool> {
    let reps: Vec<usize> = {
        let mut r: Vec<usize> = fits.iter().map(|f| f.replication).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    reps.into_iter()
        .map(|rep| {
            let slopes: Vec<Option<f64>> = targets
                .iter()
                .map(|t| {
                    fits.iter()
                        .find(|f| &f.series == t && f.replication == rep)
                        .and_then(|f| f.fit.map(|x| x.slope))
                })
                .collect();
            slopes.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a < b))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GanComparison {
    pub median_invariant: Option<f64>,
    pub median_vanilla: Option<f64>,
    pub median_floor: Option<f64>,
    pub invariant_not_worse: bool,
    /// Every non-diverged run has W1 at least half the floor of its seed.
    pub above_half_floor: bool,
}

fn arm_values(rows: &[SweepRow], series: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.series == series && !r.diverged)
        .map(|r| r.w1)
        .collect()
}

pub fn gan_comparison(rows: &[SweepRow]) -> GanComparison {
    let inv = median(&arm_values(rows, "invariant"));
    let van = median(&arm_values(rows, "vanilla"));
    let floor_of = |trial: usize| {
        rows.iter()
            .find(|r| r.series == "delta3_floor" && r.trial == trial)
            .map(|r| r.w1)
    };
    let above = rows
        .iter()
        .filter(|r| (r.series == "invariant" || r.series == "vanilla") && !r.diverged)
        .all(|r| floor_of(r.trial).is_some_and(|f| r.w1 >= 0.5 * f));
    GanComparison {
        median_invariant: inv,
        median_vanilla: van,
        median_floor: median(&arm_values(rows, "delta3_floor")),
        invariant_not_worse: matches!((inv, van), (Some(a), Some(b)) if a <= b),
        above_half_floor: above,
    }
}

fn train_config(cfg: &ExperimentConfig, target: &Target, group: GroupDescriptor, seed: u64) -> TrainConfig {
    let mut tc = TrainConfig::new(cfg.gan_n, target.dim, group);
    tc.m = cfg.gan_m.unwrap_or(50 * cfg.gan_n);
    tc.gen_steps = cfg.gan_gen_steps;
    tc.disc_steps = cfg.gan_disc_steps;
    tc.disc_width = cfg.gan_disc_width;
    tc.disc_depth = cfg.gan_disc_depth;
    tc.gen_width = cfg.gan_gen_width;
    tc.gen_depth = cfg.gan_gen_depth;
    tc.clip = cfg.gan_clip;
    tc.disc_lr = cfg.gan_disc_lr;
    tc.gen_lr = cfg.gan_gen_lr;
    tc.batch_size = cfg.gan_batch_size;
    tc.optimizer = cfg.gan_optimizer;
    tc.mode = cfg.gan_mode;
    tc.domain = target.name.clone();
    tc.seed = seed;
    tc
}

/// Invariant (configured group) and vanilla (trivial group) GANs trained on
/// the same data and seeds, each scored by exact W1 of `gan.eval_samples`
/// generated points against the reference, plus the Δ3 floor
/// `W1(S^G[mu_n], S^G[reference])` of the same data.
pub fn gan_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    if cfg.gan_n == 0 || cfg.gan_seeds == 0 || cfg.gan_eval_samples == 0 {
        return Err(Error::Config("gan.n, gan.seeds and gan.eval_samples must be positive".into()));
    }
    let biggest = cfg.gan_n.max(cfg.gan_eval_samples).max(cfg.reference_size);
    if biggest > EXACT_OT_CAP {
        return Err(Error::Config(format!(
            "exact-OT cap exceeded: {biggest} atoms per side, cap is {EXACT_OT_CAP}"
        )));
    }
    let target = target_or(cfg, "ring_modes_8")?;
    let inv_desc = cfg.group_descriptor(target.dim)?;
    let inv_group = checked_group(&target, &inv_desc)?;
    let arms = [
        ("invariant", inv_desc.clone()),
        ("vanilla", GroupDescriptor::Trivial { dim: target.dim }),
    ];
    for (_, desc) in &arms {
        train_config(cfg, &target, desc.clone(), 0).validate()?;
    }
    let reference = sample_measure(&target, cfg.reference_size, mix_seed(cfg.seed, &[REFERENCE_STREAM, 0]))?;

    let mut cells = Vec::new();
    for t in 0..cfg.gan_seeds {
        let seed = mix_seed(cfg.seed, &[t as u64]);
        for a in 0..=arms.len() {
            cells.push((t, a, seed));
        }
    }
    let out = run_cells(cfg.workers, &cells, |&(t, a, seed)| {
        let base = SweepRow {
            series: String::new(),
            replication: 0,
            group_size: inv_group.order(),
            n: cfg.gan_n,
            trial: t,
            seed,
            w1: f64::NAN,
            diverged: false,
        };
        if a == arms.len() {
            let data = sample_measure(&target, cfg.gan_n, RunSeeds::from_master(seed).data)?;
            let row = SweepRow {
                series: "delta3_floor".into(),
                w1: wasserstein1_quotient(&inv_group, &data, &reference)?,
                ..base
            };
            return Ok((row, None));
        }
        let (name, desc) = &arms[a];
        let tc = train_config(cfg, &target, desc.clone(), seed);
        let row = SweepRow {
            series: name.to_string(),
            group_size: desc.build()?.order(),
            ..base
        };
        match train_gan(&tc, &target) {
            Ok((gen, record)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[EVAL_STREAM]));
                let fake = sample_generator(&gen, &tc.source, cfg.gan_eval_samples, &mut rng);
                let w1 = wasserstein1_exact(&EmpiricalMeasure::uniform(fake)?, &reference)?;
                Ok((SweepRow { w1, ..row }, Some(record)))
            }
            Err(Error::TrainingDiverged { record, .. }) => Ok((
                SweepRow {
                    diverged: true,
                    ..row
                },
                Some(*record),
            )),
            Err(e) => Err(e),
        }
    })?;
    let mut rows = Vec::with_capacity(out.len());
    let mut records = Vec::new();
    for (row, rec) in out {
        rows.push(row);
        records.extend(rec);
    }
    let excluded = rows.iter().filter(|r| r.diverged).count();
    Ok(SweepResult {
        fits: Vec::new(),
        collapse: None,
        reference_floor: Vec::new(),
        excluded,
        rows,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(series: &str, k: usize, n: usize, trial: usize, w1: f64) -> SweepRow {
        SweepRow {
            series: series.into(),
            replication: 0,
            group_size: k,
            n,
            trial,
            seed: 0,
            w1,
            diverged: false,
        }
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let mut rows = vec![
            row("C4", 4, 50, 0, 0.1234567890123),
            row("C1", 1, 1600, 9, 1e-7),
            row("ring,mix", 1, 2, 3, 0.1 + 0.2),
        ];
        rows.push(SweepRow {
            diverged: true,
            seed: u64::MAX,
            ..row("vanilla", 1, 500, 2, f64::NAN)
        });
        let mut a = Vec::new();
        write_rows_csv(&rows, &mut a).unwrap();
        let back = read_rows_csv(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_rows_csv(&back, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back[0], rows[0]);
        assert_eq!(back[2].w1.to_bits(), rows[2].w1.to_bits());
        assert!(back[3].w1.is_nan() && back[3].diverged);
        let header = String::from_utf8(a).unwrap();
        assert!(header.starts_with("series,replication,group_size,n,trial,seed,w1,diverged\n"));
    }

    #[test]
    fn fits_and_collapse_on_synthetic_rates() {
        // err = (k n)^(-1/2): exact collapse
        let mut rows = Vec::new();
        for k in [1usize, 2, 4] {
            for n in [50usize, 100, 200, 400] {
                for t in 0..3 {
                    rows.push(row(&format!("C{k}"), k, n, t, ((k * n) as f64).powf(-0.5)));
                }
            }
        }
        rows.push(SweepRow {
            diverged: true,
            ..row("C4", 4, 50, 3, f64::NAN)
        });
        let fits = fit_series(&rows);
        assert_eq!(fits.len(), 3);
        for f in &fits {
            assert!((f.fit.unwrap().slope + 0.5).abs() < 1e-12);
        }
        assert_eq!(fits[2].excluded, 1);
        let c = collapse_stats(&fits);
        // C2: n = 50,100,200; C4: n = 50,100
        assert_eq!(c.cells.len(), 5);
        assert!(c.cells.iter().all(|c| (c.ratio - 1.0).abs() < 1e-12));
        assert_eq!(c.median, Some(1.0));
    }

    #[test]
    fn delta3_cell_of_reference_against_itself_is_zero() {
        let t = crate::targets::ring_mixture();
        let reference = sample_measure(&t, 300, 5).unwrap();
        let g = FiniteGroup::trivial(2).unwrap();
        assert_eq!(delta3_cell(&g, &reference, &reference).unwrap(), 0.0);
    }

    #[test]
    fn sweep_preconditions() {
        let mut cfg = ExperimentConfig::default();
        cfg.reference_size = 5000;
        assert!(matches!(delta3_sweep(&cfg), Err(Error::Config(m)) if m.contains("cap")));
        let mut cfg = ExperimentConfig::default();
        cfg.trials = 0;
        assert!(delta3_sweep(&cfg).is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.target = Some("mirror_gaussians".into());
        assert!(matches!(delta3_sweep(&cfg), Err(Error::Config(m)) if m.contains("not invariant")));
        let mut cfg = ExperimentConfig::default();
        cfg.gan_eval_samples = 4001;
        assert!(gan_sweep(&cfg).is_err());
    }

    #[test]
    fn small_delta3_sweep_shape() {
        let cfg = ExperimentConfig {
            n_grid: vec![20, 40, 80],
            trials: 2,
            reference_size: 200,
            delta3_groups: vec!["C1".into(), "C2".into(), "C4".into()],
            ..ExperimentConfig::default()
        };
        let res = delta3_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 3 * 3 * 2);
        assert!(res.rows.iter().all(|r| r.w1 >= 0.0));
        assert_eq!(res.fits.len(), 3);
        let c = res.collapse.unwrap();
        assert_eq!(c.cells.len(), 2 + 1);
        assert_eq!(res.reference_floor.len(), 1);
        // same data for every group
        assert_eq!(res.rows[0].seed, res.rows[6].seed);
    }

    #[test]
    fn ordering_per_replication() {
        let mk = |series: &str, rep: usize, slope: f64| SeriesFit {
            series: series.into(),
            replication: rep,
            group_size: 1,
            fit: Some(RateFit { slope, intercept: 0.0, r2: 1.0 }),
            means: Vec::new(),
            excluded: 0,
        };
        let fits = vec![mk("a", 0, -0.5), mk("b", 0, -0.3), mk("a", 1, -0.3), mk("b", 1, -0.4)];
        assert_eq!(lowdim_ordering(&fits, &["a".into(), "b".into()]), vec![true, false]);
    }
}
