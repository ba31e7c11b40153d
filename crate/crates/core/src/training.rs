//! Weight-clipped WGAN training with invariant discriminators and
//! generators, and the architecture-size helpers.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupDescriptor};
use crate::measure::{wasserstein1_exact, EmpiricalMeasure};
use crate::nn::{DiscWorkspace, InvariantDiscriminator, InvariantGenerator, ReluNet, SourceDistribution, SymmetrizationMode};
use crate::points::Point;
use crate::seeds::mix_seed;
use crate::targets::Target;

/// Architecture sizes as functions of the sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Scalings {
    pub l1: usize,
    pub n1: usize,
    pub w1: usize,
    pub w2: usize,
    pub l2: usize,
    pub m_min: u64,
}

/// `L1 = max(2, ceil(c ln n))`, `N1 = ceil(c n ln n)` spread over the
/// hidden layers as `W1 = ceil(sqrt(N1 / max(2, c ln n)))`, `L2 = max(2, ceil(c ln n))`,
/// `W2 = max(7d + 1, ceil(sqrt(c n / L2)))` and
/// `m_min = ceil(n^(2 + 2/d) (ln n)^3)`.
pub fn default_scalings(n: usize, d: usize, c: f64) -> Result<Scalings> {
    if n < 2 || d < 1 || !(c > 0.0) {
        return Err(Error::invalid("need n >= 2, d >= 1 and c > 0"));
    }
    let ln = (n as f64).ln();
    let l1 = ((c * ln).ceil() as usize).max(2);
    let n1 = ((c * n as f64 * ln).ceil() as usize).max(1);
    // width from the unrounded depth keeps w1 monotone across depth jumps
    let w1 = ((n1 as f64 / (c * ln).max(2.0)).sqrt().ceil() as usize).max(1);
    let l2 = ((c * ln).ceil() as usize).max(2);
    let w2 = ((c * n as f64 / l2 as f64).sqrt().ceil() as usize).max(7 * d + 1);
    let m_min = ((n as f64).powf(2.0 + 2.0 / d as f64) * ln.powi(3)).ceil() as u64;
    Ok(Scalings { l1, n1, w1, w2, l2, m_min })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Momentum-free RMS scaling of the gradient.
    #[default]
    Rms,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub disc_width: usize,
    pub disc_depth: usize,
    pub clip: f64,
    pub gen_width: usize,
    pub gen_depth: usize,
    pub disc_lr: f64,
    pub gen_lr: f64,
    pub disc_steps: usize,
    pub gen_steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub mode: SymmetrizationMode,
    pub group: GroupDescriptor,
    pub domain: String,
    pub source: SourceDistribution,
    /// Generated and fresh target samples for the final evaluation.
    pub eval_samples: usize,
    /// Objective is recorded every this many generator steps.
    pub log_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for `n` target samples in dimension `d` with
    /// `m = 50 n`.
    pub fn new(n: usize, d: usize, group: GroupDescriptor) -> Self {
        TrainConfig {
            n,
            m: 50 * n,
            d,
            disc_width: 32,
            disc_depth: 2,
            clip: 0.5,
            gen_width: 32,
            gen_depth: 2,
            disc_lr: 2e-3,
            gen_lr: 1e-3,
            disc_steps: 5,
            gen_steps: 1500,
            batch_size: 64,
            optimizer: OptimizerKind::Rms,
            mode: SymmetrizationMode::OrbitAverage,
            group,
            domain: String::new(),
            source: SourceDistribution::default(),
            eval_samples: 1000,
            log_every: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be positive");
        }
        if self.m < self.n {
            return bad("m must be at least n");
        }
        if self.group.dim() != self.d {
            return bad("group dimension differs from d");
        }
        if self.disc_width == 0 || self.gen_width == 0 || self.disc_depth == 0 || self.gen_depth == 0 {
            return bad("network widths and depths must be positive");
        }
        if !(self.clip > 0.0 && self.disc_lr > 0.0 && self.gen_lr > 0.0) {
            return bad("clip and learning rates must be positive");
        }
        if self.batch_size == 0 || self.disc_steps == 0 || self.log_every == 0 || self.eval_samples == 0 {
            return bad("batch size, disc steps, log interval and eval samples must be positive");
        }
        Ok(())
    }

    /// True when `m` is below the sample size the approximation theory asks for.
    pub fn m_below_theory(&self) -> bool {
        match default_scalings(self.n.max(2), self.d, 1.0) {
            Ok(s) => (self.m as u64) < s.m_min,
            Err(_) => true,
        }
    }

    fn disc_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d];
        w.extend(std::iter::repeat_n(self.disc_width, self.disc_depth));
        w.push(1);
        w
    }

    fn gen_widths(&self) -> Vec<usize> {
        let mut w = vec![1];
        w.extend(std::iter::repeat_n(self.gen_width, self.gen_depth));
        w.push(self.d);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub master: u64,
    pub data: u64,
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

impl RunSeeds {
    pub fn from_master(master: u64) -> Self {
        RunSeeds {
            master,
            data: mix_seed(master, &[0]),
            init: mix_seed(master, &[1]),
            train: mix_seed(master, &[2]),
            eval: mix_seed(master, &[3]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    /// Batch estimate of the critic objective, one entry per logged epoch.
    pub objective_trace: Vec<f64>,
    pub epochs: usize,
    pub final_w1: Option<f64>,
    pub wall_time_s: f64,
    pub seeds: RunSeeds,
    pub m_below_theory: bool,
    pub diverged: bool,
    /// Largest critic parameter magnitude seen after any critic step.
    #[serde(default)]
    pub max_disc_param: f64,
}

impl RunRecord {
    /// The record with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        RunRecord {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    sq: Vec<f64>,
}

impl Optimizer {
    const DECAY: f64 = 0.9;
    const EPS: f64 = 1e-8;

    fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        Optimizer {
            kind,
            lr,
            sq: vec![0.0; n],
        }
    }

    /// `params += sign * step(grad)`.
    fn apply(&mut self, params: &mut [f64], grad: &[f64], sign: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += sign * self.lr * g;
                }
            }
            OptimizerKind::Rms => {
                for ((p, g), s) in params.iter_mut().zip(grad).zip(&mut self.sq) {
                    *s = Self::DECAY * *s + (1.0 - Self::DECAY) * g * g;
                    *p += sign * self.lr * g / (s.sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Cycles through a fixed index set in shuffled passes.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
}

impl Batcher {
    fn new(n: usize) -> Self {
        Batcher {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next<R: Rng>(&mut self, k: usize, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        let k = k.min(self.order.len());
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
    }
}

/// Critic objective `mean D(real) - mean D(fake)` and its parameter gradient.
pub fn disc_objective_and_grad(disc: &InvariantDiscriminator, real: &[Point], fake: &[Point]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; disc.base().num_params()];
    let mut ws = DiscWorkspace::default();
    let obj = disc_objective_into(disc, real, fake, &mut grad, &mut ws);
    (obj, grad)
}

fn disc_objective_into(
    disc: &InvariantDiscriminator,
    real: &[Point],
    fake: &[Point],
    grad: &mut [f64],
    ws: &mut DiscWorkspace,
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (wr, wf) = (1.0 / real.len() as f64, 1.0 / fake.len() as f64);
    let mut obj = 0.0;
    for x in real {
        obj += wr * disc.accumulate(x, wr, grad, ws);
    }
    for x in fake {
        obj -= wf * disc.accumulate(x, -wf, grad, ws);
    }
    obj
}

/// Generator loss `-mean_i D(sigma_i G(z_i))` for fixed latents and group
/// elements, with its gradient in the generator parameters.
pub fn generator_loss_and_grad(
    gen: &InvariantGenerator,
    disc: &InvariantDiscriminator,
    latents: &[f64],
    sigmas: &[usize],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; gen.base().num_params()];
    let mut dgrad = vec![0.0; disc.base().num_params()];
    let mut ws = GenWorkspace::default();
    let loss = generator_loss_into(gen, disc, latents, sigmas, &mut grad, &mut dgrad, &mut ws);
    (loss, grad)
}

#[derive(Default)]
struct GenWorkspace {
    net: crate::nn::Workspace,
    disc: DiscWorkspace,
    x: Vec<f64>,
    up: Vec<f64>,
}

fn generator_loss_into(
    gen: &InvariantGenerator,
    disc: &InvariantDiscriminator,
    latents: &[f64],
    sigmas: &[usize],
    grad: &mut [f64],
    scratch: &mut [f64],
    ws: &mut GenWorkspace,
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let w = 1.0 / latents.len() as f64;
    let d = gen.dim();
    ws.x.resize(d, 0.0);
    ws.up.resize(d, 0.0);
    let mut loss = 0.0;
    for (&z, &s) in latents.iter().zip(sigmas) {
        let e = gen.group().element(s);
        let y = gen.base().forward_ws(&[z], &mut ws.net);
        e.apply_into(y, &mut ws.x);
        // only the input gradient of the critic is needed here
        let v = disc.accumulate(&ws.x, 0.0, scratch, &mut ws.disc);
        loss -= w * v;
        let gx = InvariantDiscriminator::input_gradient(&ws.disc);
        e.transpose_apply_into(gx, &mut ws.up);
        ws.up.iter_mut().for_each(|u| *u *= -w);
        gen.base().backward_ws(&ws.up, 1.0, grad, &mut ws.net);
    }
    loss
}

fn generate_batch(
    gen: &InvariantGenerator,
    latents: &[f64],
    sigmas: &[usize],
    ws: &mut crate::nn::Workspace,
    out: &mut Vec<Point>,
) {
    out.clear();
    for (&z, &s) in latents.iter().zip(sigmas) {
        let y = gen.base().forward_ws(&[z], ws);
        let mut x = vec![0.0; y.len()];
        gen.group().element(s).apply_into(y, &mut x);
        out.push(x);
    }
}

/// Trains an invariant generator against an invariant critic on `cfg.n`
/// target samples and `cfg.m` latent samples.
pub fn train_gan(cfg: &TrainConfig, target: &Target) -> Result<(InvariantGenerator, RunRecord)> {
    cfg.validate()?;
    if target.dim != cfg.d {
        return Err(Error::Config("target dimension differs from d".into()));
    }
    let start = Instant::now();
    let seeds = RunSeeds::from_master(cfg.seed);
    let group: FiniteGroup = cfg.group.build()?;

    let mut data_rng = ChaCha8Rng::seed_from_u64(seeds.data);
    let real: Vec<Point> = target.sample_n(cfg.n, &mut data_rng);
    let latents: Vec<f64> = (0..cfg.m).map(|_| cfg.source.sample(&mut data_rng)).collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds.init);
    let disc_base = ReluNet::init(&cfg.disc_widths(), Some(cfg.clip), &mut init_rng)?;
    let gen_base = ReluNet::init(&cfg.gen_widths(), None, &mut init_rng)?;
    let mut disc = InvariantDiscriminator::new(disc_base, group.clone(), cfg.mode)?;
    let mut gen = InvariantGenerator::new(gen_base, group.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seeds.train);
    let mut dopt = Optimizer::new(cfg.optimizer, cfg.disc_lr, disc.base().num_params());
    let mut gopt = Optimizer::new(cfg.optimizer, cfg.gen_lr, gen.base().num_params());
    let mut real_batcher = Batcher::new(cfg.n);
    let mut latent_batcher = Batcher::new(cfg.m);
    let b = cfg.batch_size;

    let mut dgrad = vec![0.0; disc.base().num_params()];
    let mut ggrad = vec![0.0; gen.base().num_params()];
    let mut dws = DiscWorkspace::default();
    let mut gws = GenWorkspace::default();
    let mut nws = crate::nn::Workspace::default();
    let mut idx = Vec::with_capacity(b);
    let mut real_batch: Vec<Point> = Vec::with_capacity(b);
    let mut fake_batch: Vec<Point> = Vec::with_capacity(b);
    let mut zs = Vec::with_capacity(b);
    let mut sig = Vec::with_capacity(b);

    let mut trace = Vec::new();
    let mut record = RunRecord {
        config: cfg.clone(),
        objective_trace: Vec::new(),
        epochs: 0,
        final_w1: None,
        wall_time_s: 0.0,
        seeds,
        m_below_theory: cfg.m_below_theory(),
        diverged: false,
        max_disc_param: 0.0,
    };

    for step in 0..cfg.gen_steps {
        let mut last_obj = 0.0;
        for _ in 0..cfg.disc_steps {
            real_batcher.next(b, &mut rng, &mut idx);
            real_batch.clear();
            real_batch.extend(idx.iter().map(|&i| real[i].clone()));
            latent_batcher.next(b, &mut rng, &mut idx);
            zs.clear();
            zs.extend(idx.iter().map(|&i| latents[i]));
            sig.clear();
            sig.extend((0..zs.len()).map(|_| group.haar_index(&mut rng)));
            generate_batch(&gen, &zs, &sig, &mut nws, &mut fake_batch);
            last_obj = disc_objective_into(&disc, &real_batch, &fake_batch, &mut dgrad, &mut dws);
            let net = disc.base_mut();
            dopt.apply(net.params_mut(), &dgrad, 1.0);
            net.clip_weights(cfg.clip);
            record.max_disc_param = record.max_disc_param.max(net.max_abs_param());
        }
        latent_batcher.next(b, &mut rng, &mut idx);
        zs.clear();
        zs.extend(idx.iter().map(|&i| latents[i]));
        sig.clear();
        sig.extend((0..zs.len()).map(|_| group.haar_index(&mut rng)));
        let loss = generator_loss_into(&gen, &disc, &zs, &sig, &mut ggrad, &mut dgrad, &mut gws);
        if !loss.is_finite() || !last_obj.is_finite() || ggrad.iter().any(|g| !g.is_finite()) {
            record.diverged = true;
            record.objective_trace = trace;
            record.epochs = record.objective_trace.len();
            record.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::TrainingDiverged {
                step,
                record: Box::new(record),
            });
        }
        gopt.apply(gen.base_mut().params_mut(), &ggrad, -1.0);
        if (step + 1) % cfg.log_every == 0 {
            trace.push(last_obj);
        }
    }

    let eval = evaluate_generator(&gen, target, &cfg.source, cfg.eval_samples, seeds.eval, 1)?;
    record.objective_trace = trace;
    record.epochs = record.objective_trace.len();
    record.final_w1 = Some(eval.mean);
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok((gen, record))
}

/// Draws `n` generator samples with a caller-owned stream.
pub fn sample_generator<R: Rng>(gen: &InvariantGenerator, source: &SourceDistribution, n: usize, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let z = source.sample(rng);
            gen.generate(z, rng)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub mean: f64,
    pub sd: f64,
    pub values: Vec<f64>,
}

/// Exact W1 between `n_eval` generated samples and `n_eval` fresh target
/// samples, repeated `repeats` times.
pub fn evaluate_generator(
    gen: &InvariantGenerator,
    target: &Target,
    source: &SourceDistribution,
    n_eval: usize,
    seed: u64,
    repeats: usize,
) -> Result<EvalResult> {
    if n_eval == 0 || repeats == 0 {
        return Err(Error::invalid("n_eval and repeats must be positive"));
    }
    let mut values = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[r as u64]));
        let fake = sample_generator(gen, source, n_eval, &mut rng);
        let real = target.sample_n(n_eval, &mut rng);
        values.push(wasserstein1_exact(
            &EmpiricalMeasure::uniform(fake)?,
            &EmpiricalMeasure::uniform(real)?,
        )?);
    }
    let mean = values.iter().sum::<f64>() / repeats as f64;
    let sd = if repeats > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(EvalResult { mean, sd, values })
}
