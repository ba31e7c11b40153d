//! Flat `key = value` experiment configuration. Lines starting with `#` and
//! trailing `# ...` are comments; unknown keys are errors.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::GroupDescriptor;
use crate::nn::SymmetrizationMode;
use crate::training::OptimizerKind;

/// Every accepted key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; every cell seed is derived from it (default 0)"),
    ("workers", "worker threads, 0 = one per core (default 0)"),
    ("target", "target distribution (default ring_mixture, ring_modes_8 for gan-sweep)"),
    ("group.kind", "trivial | cyclic | reflection | product (default cyclic)"),
    ("group.k", "rotation order for cyclic and product groups (default 4)"),
    ("group.axis", "reflected coordinate for reflection and product groups (default 0)"),
    ("domain.name", "fundamental-domain example for covering and verify (default disk_sector_4)"),
    ("sweep.n_grid", "comma-separated sample sizes (default 50,100,200,400,800,1600)"),
    ("sweep.trials", "trials per cell (default 10)"),
    ("sweep.reference_size", "reference sample size, at most 4000 (default 4000)"),
    ("sweep.reference_floor", "measure W1 between two independent reference draws (default true)"),
    ("delta3.groups", "comma-separated group labels: trivial, C<k>, mirror<axis>, <a>x<b> (default C1..C8)"),
    ("lowdim.targets", "comma-separated targets (default circle_r3,ball_r3)"),
    ("lowdim.replications", "independent replications, each with its own reference (default 3)"),
    ("gan.n", "target samples per run (default 500)"),
    ("gan.seeds", "runs per arm (default 5)"),
    ("gan.m", "latent samples per run (default 50 n)"),
    ("gan.gen_steps", "generator steps (default 1500)"),
    ("gan.disc_steps", "critic steps per generator step (default 5)"),
    ("gan.disc_width", "critic hidden width (default 32)"),
    ("gan.disc_depth", "critic hidden layers (default 2)"),
    ("gan.gen_width", "generator hidden width (default 32)"),
    ("gan.gen_depth", "generator hidden layers (default 2)"),
    ("gan.clip", "critic weight clip K (default 0.5)"),
    ("gan.disc_lr", "critic learning rate (default 0.002)"),
    ("gan.gen_lr", "generator learning rate (default 0.001)"),
    ("gan.batch_size", "minibatch size (default 64)"),
    ("gan.optimizer", "rms | sgd (default rms)"),
    ("gan.mode", "orbit_average | input_average (default orbit_average)"),
    ("gan.eval_samples", "generated samples compared with the reference (default 2000)"),
    ("covering.epsilons", "comma-separated scales (default 0.2,0.1,0.05,0.025)"),
    ("covering.cloud_size", "fundamental-domain cloud size (default 20000)"),
    ("covering.ratio_epsilon", "scale of the covering-ratio check (default 0.05)"),
    ("verify.suites", "comma-separated suite names, empty = all (default empty)"),
    ("verify.fault", "none | cayley; cayley corrupts one Cayley entry in the group suite (default none)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    Cayley,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub target: Option<String>,
    pub group_kind: String,
    pub group_k: usize,
    pub group_axis: usize,
    pub domain_name: String,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub reference_size: usize,
    pub reference_floor: bool,
    pub delta3_groups: Vec<String>,
    pub lowdim_targets: Vec<String>,
    pub lowdim_replications: usize,
    pub gan_n: usize,
    pub gan_seeds: usize,
    pub gan_m: Option<usize>,
    pub gan_gen_steps: usize,
    pub gan_disc_steps: usize,
    pub gan_disc_width: usize,
    pub gan_disc_depth: usize,
    pub gan_gen_width: usize,
    pub gan_gen_depth: usize,
    pub gan_clip: f64,
    pub gan_disc_lr: f64,
    pub gan_gen_lr: f64,
    pub gan_batch_size: usize,
    pub gan_optimizer: OptimizerKind,
    pub gan_mode: SymmetrizationMode,
    pub gan_eval_samples: usize,
    pub covering_epsilons: Vec<f64>,
    pub covering_cloud_size: usize,
    pub covering_ratio_epsilon: f64,
    pub verify_suites: Vec<String>,
    pub verify_fault: Fault,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            target: None,
            group_kind: "cyclic".into(),
            group_k: 4,
            group_axis: 0,
            domain_name: "disk_sector_4".into(),
            n_grid: vec![50, 100, 200, 400, 800, 1600],
            trials: 10,
            reference_size: 4000,
            reference_floor: true,
            delta3_groups: (1..=8).map(|k| format!("C{k}")).collect(),
            lowdim_targets: vec!["circle_r3".into(), "ball_r3".into()],
            lowdim_replications: 3,
            gan_n: 500,
            gan_seeds: 5,
            gan_m: None,
            gan_gen_steps: 1500,
            gan_disc_steps: 5,
            gan_disc_width: 32,
            gan_disc_depth: 2,
            gan_gen_width: 32,
            gan_gen_depth: 2,
            gan_clip: 0.5,
            gan_disc_lr: 2e-3,
            gan_gen_lr: 1e-3,
            gan_batch_size: 64,
            gan_optimizer: OptimizerKind::Rms,
            gan_mode: SymmetrizationMode::OrbitAverage,
            gan_eval_samples: 2000,
            covering_epsilons: vec![0.2, 0.1, 0.05, 0.025],
            covering_cloud_size: 20_000,
            covering_ratio_epsilon: 0.05,
            verify_suites: Vec::new(),
            verify_fault: Fault::None,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("bad value `{v}` for `{key}`: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = value(key, v)?,
            "workers" => self.workers = value(key, v)?,
            "target" => self.target = Some(v.to_string()),
            "group.kind" => match v {
                "trivial" | "cyclic" | "reflection" | "product" => self.group_kind = v.to_string(),
                _ => return Err(Error::Config(format!("unknown group kind `{v}`"))),
            },
            "group.k" => self.group_k = value(key, v)?,
            "group.axis" => self.group_axis = value(key, v)?,
            "domain.name" => self.domain_name = v.to_string(),
            "sweep.n_grid" => self.n_grid = list(key, v)?,
            "sweep.trials" => self.trials = value(key, v)?,
            "sweep.reference_size" => self.reference_size = value(key, v)?,
            "sweep.reference_floor" => self.reference_floor = value(key, v)?,
            "delta3.groups" => self.delta3_groups = list(key, v)?,
            "lowdim.targets" => self.lowdim_targets = list(key, v)?,
            "lowdim.replications" => self.lowdim_replications = value(key, v)?,
            "gan.n" => self.gan_n = value(key, v)?,
            "gan.seeds" => self.gan_seeds = value(key, v)?,
            "gan.m" => self.gan_m = Some(value(key, v)?),
            "gan.gen_steps" => self.gan_gen_steps = value(key, v)?,
            "gan.disc_steps" => self.gan_disc_steps = value(key, v)?,
            "gan.disc_width" => self.gan_disc_width = value(key, v)?,
            "gan.disc_depth" => self.gan_disc_depth = value(key, v)?,
            "gan.gen_width" => self.gan_gen_width = value(key, v)?,
            "gan.gen_depth" => self.gan_gen_depth = value(key, v)?,
            "gan.clip" => self.gan_clip = value(key, v)?,
            "gan.disc_lr" => self.gan_disc_lr = value(key, v)?,
            "gan.gen_lr" => self.gan_gen_lr = value(key, v)?,
            "gan.batch_size" => self.gan_batch_size = value(key, v)?,
            "gan.optimizer" => {
                self.gan_optimizer = match v {
                    "rms" => OptimizerKind::Rms,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(Error::Config(format!("unknown optimizer `{v}`"))),
                }
            }
            "gan.mode" => self.gan_mode = value(key, v)?,
            "gan.eval_samples" => self.gan_eval_samples = value(key, v)?,
            "covering.epsilons" => self.covering_epsilons = list(key, v)?,
            "covering.cloud_size" => self.covering_cloud_size = value(key, v)?,
            "covering.ratio_epsilon" => self.covering_ratio_epsilon = value(key, v)?,
            "verify.suites" => self.verify_suites = list(key, v)?,
            "verify.fault" => {
                self.verify_fault = match v {
                    "none" => Fault::None,
                    "cayley" => Fault::Cayley,
                    _ => return Err(Error::Config(format!("unknown fault `{v}`"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// The group selected by the `group.*` keys, acting on `R^dim` (rotations
    /// in the first coordinate plane).
    pub fn group_descriptor(&self, dim: usize) -> Result<GroupDescriptor> {
        let cyclic = GroupDescriptor::Cyclic {
            k: self.group_k,
            dim,
            plane: (0, 1),
        };
        let mirror = GroupDescriptor::Reflection {
            axis: self.group_axis,
            dim,
        };
        let g = match self.group_kind.as_str() {
            "trivial" => GroupDescriptor::Trivial { dim },
            "cyclic" => cyclic,
            "reflection" => mirror,
            "product" => GroupDescriptor::Product {
                left: Box::new(cyclic),
                right: Box::new(mirror),
            },
            other => return Err(Error::Config(format!("unknown group kind `{other}`"))),
        };
        g.build().map_err(|e| Error::Config(format!("group.*: {}", strip(e))))?;
        Ok(g)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Inverse of the `Display` form of [`GroupDescriptor`]: `trivial`, `C<k>`,
/// `mirror<axis>` or `<a>x<b>`. Rotations act in the first coordinate plane.
pub fn parse_group_label(label: &str, dim: usize) -> Result<GroupDescriptor> {
    let bad = || Error::Config(format!("bad group label `{label}`"));
    if let Some((a, b)) = label.split_once('x') {
        return Ok(GroupDescriptor::Product {
            left: Box::new(parse_group_label(a, dim)?),
            right: Box::new(parse_group_label(b, dim)?),
        });
    }
    if label == "trivial" {
        return Ok(GroupDescriptor::Trivial { dim });
    }
    if let Some(k) = label.strip_prefix('C') {
        let k = k.parse().map_err(|_| bad())?;
        return Ok(GroupDescriptor::Cyclic { k, dim, plane: (0, 1) });
    }
    if let Some(axis) = label.strip_prefix("mirror") {
        let axis = axis.parse().map_err(|_| bad())?;
        return Ok(GroupDescriptor::Reflection { axis, dim });
    }
    Err(bad())
}
