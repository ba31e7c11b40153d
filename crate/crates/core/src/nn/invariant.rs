use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ReluNet, Workspace};
use crate::error::{Error, Result};
use crate::group::FiniteGroup;
use crate::points::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetrizationMode {
    /// `(1/|G|) sum_i phi(sigma_i^{-1} x)`.
    #[default]
    OrbitAverage,
    /// `phi(W_G x)` with the averaged matrix `W_G`.
    InputAverage,
}

impl std::str::FromStr for SymmetrizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit_average" => Ok(SymmetrizationMode::OrbitAverage),
            "input_average" => Ok(SymmetrizationMode::InputAverage),
            _ => Err(Error::invalid(format!("unknown symmetrization mode `{s}`"))),
        }
    }
}

/// A scalar ReLU net made invariant under a finite group.
#[derive(Debug, Clone)]
pub struct InvariantDiscriminator {
    base: ReluNet,
    group: FiniteGroup,
    mode: SymmetrizationMode,
    mean: Vec<f64>,
}

/// Per-thread scratch for invariant evaluation.
#[derive(Debug, Default, Clone)]
pub struct DiscWorkspace {
    net: Workspace,
    moved: Vec<f64>,
    gx: Vec<f64>,
    pulled: Vec<f64>,
}

impl InvariantDiscriminator {
    pub fn new(base: ReluNet, group: FiniteGroup, mode: SymmetrizationMode) -> Result<Self> {
        if base.output_dim() != 1 {
            return Err(Error::invalid("discriminator base must have scalar output"));
        }
        if base.input_dim() != group.dim() {
            return Err(Error::invalid("discriminator input and group dimensions differ"));
        }
        let m: DMatrix<f64> = group.mean_matrix();
        let d = group.dim();
        let mean = (0..d * d).map(|i| m[(i / d, i % d)]).collect();
        Ok(InvariantDiscriminator { base, group, mode, mean })
    }

    pub fn base(&self) -> &ReluNet {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut ReluNet {
        &mut self.base
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn mode(&self) -> SymmetrizationMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {}, discriminator expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.value(x, &mut DiscWorkspace::default()))
    }

    fn mean_apply(&self, x: &[f64], out: &mut Vec<f64>) {
        let d = x.len();
        out.clear();
        for r in 0..d {
            out.push((0..d).map(|c| self.mean[r * d + c] * x[c]).sum());
        }
    }

    fn mean_transpose_apply(&self, v: &[f64], out: &mut Vec<f64>) {
        let d = v.len();
        out.clear();
        for c in 0..d {
            out.push((0..d).map(|r| self.mean[r * d + c] * v[r]).sum());
        }
    }

    /// Unchecked evaluation with caller-owned scratch.
    pub(crate) fn value(&self, x: &[f64], ws: &mut DiscWorkspace) -> f64 {
        match self.mode {
            SymmetrizationMode::OrbitAverage => {
                let k = self.group.order();
                ws.moved.resize(x.len(), 0.0);
                let mut acc = 0.0;
                for i in 0..k {
                    let inv = self.group.inverse_index(i);
                    self.group.element(inv).apply_into(x, &mut ws.moved);
                    acc += self.base.eval_scalar(&ws.moved, &mut ws.net);
                }
                acc / k as f64
            }
            SymmetrizationMode::InputAverage => {
                let mut moved = std::mem::take(&mut ws.moved);
                self.mean_apply(x, &mut moved);
                let v = self.base.eval_scalar(&moved, &mut ws.net);
                ws.moved = moved;
                v
            }
        }
    }

    /// Adds `scale * df/dparams` at `x` into `grad`; returns `f(x)`. The
    /// input gradient `df/dx` is left in `ws` and exposed via
    /// `input_gradient`.
    pub(crate) fn accumulate(&self, x: &[f64], scale: f64, grad: &mut [f64], ws: &mut DiscWorkspace) -> f64 {
        let d = x.len();
        ws.gx.clear();
        ws.gx.resize(d, 0.0);
        match self.mode {
            SymmetrizationMode::OrbitAverage => {
                let k = self.group.order();
                let w = 1.0 / k as f64;
                ws.moved.resize(d, 0.0);
                ws.pulled.resize(d, 0.0);
                let mut acc = 0.0;
                for i in 0..k {
                    let inv = self.group.element(self.group.inverse_index(i));
                    inv.apply_into(x, &mut ws.moved);
                    self.base.forward_ws(&ws.moved, &mut ws.net);
                    acc += ws.net.acts.last().unwrap()[0];
                    let gin = self.base.backward_ws(&[1.0], scale * w, grad, &mut ws.net);
                    inv.transpose_apply_into(gin, &mut ws.pulled);
                    for (g, p) in ws.gx.iter_mut().zip(&ws.pulled) {
                        *g += w * p;
                    }
                }
                acc * w
            }
            SymmetrizationMode::InputAverage => {
                let mut moved = std::mem::take(&mut ws.moved);
                self.mean_apply(x, &mut moved);
                self.base.forward_ws(&moved, &mut ws.net);
                let v = ws.net.acts.last().unwrap()[0];
                let gin = self.base.backward_ws(&[1.0], scale, grad, &mut ws.net).to_vec();
                let mut gx = std::mem::take(&mut ws.gx);
                self.mean_transpose_apply(&gin, &mut gx);
                ws.gx = gx;
                ws.moved = moved;
                v
            }
        }
    }

    pub(crate) fn input_gradient(ws: &DiscWorkspace) -> &[f64] {
        &ws.gx
    }

    /// `(df/dparams, df/dx)` at `x`.
    pub fn gradients(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.dim() {
            return Err(Error::invalid("point dimension does not match the discriminator"));
        }
        let mut grad = vec![0.0; self.base.num_params()];
        let mut ws = DiscWorkspace::default();
        self.accumulate(x, 1.0, &mut grad, &mut ws);
        Ok((grad, ws.gx))
    }
}

/// A base net `R -> R^d` followed by a Haar-random group element.
#[derive(Debug, Clone)]
pub struct InvariantGenerator {
    base: ReluNet,
    group: FiniteGroup,
}

impl InvariantGenerator {
    pub fn new(base: ReluNet, group: FiniteGroup) -> Result<Self> {
        if base.input_dim() != 1 {
            return Err(Error::invalid("generator base must take a scalar latent"));
        }
        if base.output_dim() != group.dim() {
            return Err(Error::invalid("generator output and group dimensions differ"));
        }
        Ok(InvariantGenerator { base, group })
    }

    pub fn base(&self) -> &ReluNet {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut ReluNet {
        &mut self.base
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    /// `sigma * base(z)` for a given element index.
    pub fn generate_with(&self, z: f64, sigma: usize) -> Point {
        let y = self.base.forward(&[z]).expect("scalar latent");
        let mut out = vec![0.0; y.len()];
        self.group.element(sigma).apply_into(&y, &mut out);
        out
    }

    /// One draw: Haar element applied to `base(z)`.
    pub fn generate<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> Point {
        let s = self.group.haar_index(rng);
        self.generate_with(z, s)
    }
}
