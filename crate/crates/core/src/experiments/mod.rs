//! Experiment harness: configuration, sweeps, rate fits, verification
//! suites and the on-disk outputs of each command.

pub mod config;
pub mod fit;
pub mod instances;
pub mod plot;
pub mod sweep;
pub mod verify;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::covering::{covering_counts, covering_ratio_check, slope_of};
use crate::domain::{builtin_domain, check_assumption2};
use crate::error::{Error, Result};
use crate::seeds::mix_seed;

pub use config::{parse_group_label, ExperimentConfig, Fault, CONFIG_KEYS};
pub use fit::{median, rate_fit, RateFit};
pub use plot::{loglog_svg, status_svg, Series};
pub use sweep::{
    delta3_sweep, gan_comparison, gan_sweep, lowdim_ordering, lowdim_sweep, read_rows_csv, write_rows_csv,
    CollapseStats, GanComparison, SeriesFit, SweepResult, SweepRow,
};
pub use verify::{cmd_verify, CheckResult, VerifyReport, SUITES};

/// Evaluates `f` on every cell with `workers` threads (0 = one per core).
/// Results come back in cell order whatever the scheduling.
pub fn run_cells<C, T, F>(workers: usize, cells: &[C], f: F) -> Result<Vec<T>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Delta3Sweep,
    GanSweep,
    Lowdim,
    Covering,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Verify,
        Command::Delta3Sweep,
        Command::GanSweep,
        Command::Lowdim,
        Command::Covering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Delta3Sweep => "delta3-sweep",
            Command::GanSweep => "gan-sweep",
            Command::Lowdim => "lowdim",
            Command::Covering => "covering",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// False only when a verification check failed.
    pub passed: bool,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringRow {
    pub epsilon: f64,
    pub count: usize,
}

fn environment(cfg: &ExperimentConfig) -> serde_json::Value {
    let threads = if cfg.workers == 0 { rayon::current_num_threads() } else { cfg.workers };
    json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "workers": threads,
        "master_seed": cfg.seed,
    })
}

fn fit_plot(title: &str, fits: &[SeriesFit]) -> String {
    let series: Vec<Series> = fits
        .iter()
        .map(|f| Series {
            label: if fits.iter().any(|o| o.replication > 0) {
                format!("{} r{}", f.series, f.replication)
            } else {
                f.series.clone()
            },
            points: f.means.iter().map(|&(n, e)| (n as f64, e)).collect(),
            fit: f.fit,
        })
        .collect();
    loglog_svg(title, "n", "W1", &series)
}

fn write_csv_file(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows_csv(rows, fs::File::create(path)?)
}

/// Runs `cmd` and writes `results.csv`, `summary.json` and `plot.svg` to
/// `out` (created if missing).
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let (passed, mut summary, svg) = match cmd {
        Command::Verify => {
            let report = cmd_verify(cfg)?;
            let mut wr = csv::Writer::from_path(out.join("results.csv"))?;
            for c in &report.checks {
                wr.serialize(c)?;
            }
            wr.flush()?;
            let suites = report.suites();
            let svg = status_svg("verification suites", &suites);
            let summary = json!({
                "passed": report.passed(),
                "suites": suites.iter().map(|(s, ok)| json!({"suite": s, "passed": ok})).collect::<Vec<_>>(),
                "failed_checks": report.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>(),
            });
            (report.passed(), summary, svg)
        }
        Command::Delta3Sweep => {
            let res = delta3_sweep(cfg)?;
            write_csv_file(&out.join("results.csv"), &res.rows)?;
            let summary = json!({
                "fits": res.fits,
                "collapse": res.collapse,
                "reference_floor": res.reference_floor,
                "excluded": res.excluded,
            });
            (true, summary, fit_plot("Δ3 term: W1(S[mu_n], S[reference])", &res.fits))
        }
        Command::Lowdim => {
            let res = lowdim_sweep(cfg)?;
            write_csv_file(&out.join("results.csv"), &res.rows)?;
            let ordering = lowdim_ordering(&res.fits, &cfg.lowdim_targets);
            let summary = json!({
                "fits": res.fits,
                "slopes_increase_in_target_order": ordering,
                "reference_floor": res.reference_floor,
                "excluded": res.excluded,
            });
            (true, summary, fit_plot("low-dimensional targets", &res.fits))
        }
        Command::GanSweep => {
            let res = gan_sweep(cfg)?;
            write_csv_file(&out.join("results.csv"), &res.rows)?;
            fs::write(out.join("runs.json"), serde_json::to_string_pretty(&res.records)?)?;
            let cmp = gan_comparison(&res.rows);
            let series: Vec<Series> = ["invariant", "vanilla", "delta3_floor"]
                .iter()
                .map(|arm| Series {
                    label: arm.to_string(),
                    points: res
                        .rows
                        .iter()
                        .filter(|r| r.series == *arm)
                        .map(|r| ((r.trial + 1) as f64, r.w1))
                        .collect(),
                    fit: None,
                })
                .collect();
            let summary = json!({
                "comparison": cmp,
                "excluded": res.excluded,
                "m_below_theory": res.records.iter().any(|r| r.m_below_theory),
            });
            (true, summary, loglog_svg("GAN W1 per seed", "seed index", "W1", &series))
        }
        Command::Covering => {
            let spec = builtin_domain(&cfg.domain_name).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0]));
            let cloud0 = spec.sample_x0_cloud(cfg.covering_cloud_size, &mut rng);
            let mut cloud = Vec::with_capacity(cloud0.len() * spec.group().order());
            for p in &cloud0 {
                cloud.extend(spec.group().orbit(p)?);
            }
            let report = covering_counts(&cloud, &cfg.covering_epsilons)?;
            let mut wr = csv::Writer::from_path(out.join("results.csv"))?;
            for (&epsilon, &count) in report.epsilons.iter().zip(&report.counts) {
                wr.serialize(CoveringRow { epsilon, count })?;
            }
            wr.flush()?;
            let slope = if report.epsilons.len() >= 2 { Some(slope_of(&report)) } else { None };
            let ratio = covering_ratio_check(&spec, cfg.covering_ratio_epsilon, cfg.covering_cloud_size, &mut rng)?;
            let a2 = check_assumption2(&spec, &cfg.covering_epsilons, cfg.covering_cloud_size, &mut rng)?;
            a2.write_csv(fs::File::create(out.join("assumption2.csv"))?)?;
            let svg = loglog_svg(
                &format!("covering numbers of {}", spec.name()),
                "1/epsilon",
                "greedy net size",
                &[Series {
                    label: spec.name().to_string(),
                    points: report.epsilons.iter().zip(&report.counts).map(|(e, &c)| (1.0 / e, c as f64)).collect(),
                    fit: None,
                }],
            );
            let summary = json!({
                "domain": spec.name(),
                "cloud_size": cloud.len(),
                "method": report.method,
                "slope": slope,
                "ratio": ratio,
                "ratio_bound": 1.0 / spec.group().order() as f64,
                "assumption2_fitted_r": a2.fitted_r,
            });
            (true, summary, svg)
        }
    };
    if let Some(obj) = summary.as_object_mut() {
        obj.insert("command".into(), json!(cmd.name()));
        obj.insert("config".into(), serde_json::to_value(cfg)?);
        obj.insert("environment".into(), environment(cfg));
        obj.insert("runtime_s".into(), json!(start.elapsed().as_secs_f64()));
    }
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(out.join("plot.svg"), svg)?;
    Ok(Outcome { passed, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_cells_keeps_order() {
        let cells: Vec<u64> = (0..100).collect();
        let out = run_cells(3, &cells, |&c| Ok(c * c)).unwrap();
        assert_eq!(out, cells.iter().map(|c| c * c).collect::<Vec<_>>());
        let err = run_cells(2, &cells, |&c| if c == 50 { Err(Error::invalid("boom")) } else { Ok(c) });
        assert!(err.is_err());
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("sweep".parse::<Command>().is_err());
    }

    #[test]
    fn covering_command_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            domain_name: "mirror_square".into(),
            covering_cloud_size: 2000,
            ..ExperimentConfig::default()
        };
        let outcome = run_command(Command::Covering, &cfg, dir.path()).unwrap();
        assert!(outcome.passed);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.starts_with("epsilon,count\n"));
        assert_eq!(csv.lines().count(), 5);
        let slope = outcome.summary["slope"].as_f64().unwrap();
        assert!(slope > 1.0 && slope < 2.5, "{slope}");
        assert!(dir.path().join("assumption2.csv").exists());
        assert!(fs::read_to_string(dir.path().join("plot.svg")).unwrap().contains("<svg"));
    }
}
