//! Fully connected ReLU networks with hand-written backprop, plus the
//! group-invariant wrappers and the piecewise-linear transport generator.

mod checkpoint;
mod invariant;
mod transport;

use rand::Rng;

use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_FORMAT};
pub(crate) use invariant::DiscWorkspace;
pub use invariant::{InvariantDiscriminator, InvariantGenerator, SymmetrizationMode};
pub use transport::{
    build_transport_map, build_transport_map_weighted, epsilon_limit, transport_capacity_check, SourceDistribution,
    TransportMap,
};

/// `x -> W_L relu(... relu(W_0 x + b_0) ...) + b_L`.
///
/// All parameters live in one flat vector: for each layer, the row-major
/// weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    widths: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    weight_bound: Option<f64>,
}

/// Scratch buffers reused across forward/backward calls.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl ReluNet {
    /// All-zero network. `widths` is `(d_0, ..., d_{L+1})`.
    pub fn zeros(widths: &[usize], weight_bound: Option<f64>) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("need at least input and output widths, all positive"));
        }
        if let Some(k) = weight_bound {
            if !(k > 0.0) {
                return Err(Error::invalid("weight bound must be positive"));
            }
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for w in widths.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        offsets.push(total);
        Ok(ReluNet {
            widths: widths.to_vec(),
            params: vec![0.0; total],
            offsets,
            weight_bound,
        })
    }

    /// Uniform `[-a, a]` weights with `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases, then clipped to the bound if one is set.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], weight_bound: Option<f64>, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, weight_bound)?;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-a..=a);
            }
        }
        if let Some(k) = weight_bound {
            net.clip_weights(k);
        }
        Ok(net)
    }

    /// Builds a net from per-layer row-major weights and biases.
    pub fn from_layers(widths: &[usize], layers: &[(Vec<f64>, Vec<f64>)], weight_bound: Option<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths, weight_bound)?;
        if layers.len() != net.num_layers() {
            return Err(Error::invalid("wrong number of layers"));
        }
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.len() != widths[l] * widths[l + 1] || b.len() != widths[l + 1] {
                return Err(Error::invalid(format!("layer {l} has the wrong shape")));
            }
            let start = net.offsets[l];
            net.params[start..start + w.len()].copy_from_slice(w);
            net.params[start + w.len()..net.offsets[l + 1]].copy_from_slice(b);
        }
        Ok(net)
    }

    /// Replaces the flat parameter vector.
    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(self)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of affine maps (hidden layers + 1).
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn weight_bound(&self) -> Option<f64> {
        self.weight_bound
    }

    pub fn layer_weights(&self, l: usize) -> &[f64] {
        let start = self.offsets[l];
        &self.params[start..start + self.widths[l] * self.widths[l + 1]]
    }

    pub fn layer_bias(&self, l: usize) -> &[f64] {
        let start = self.offsets[l] + self.widths[l] * self.widths[l + 1];
        &self.params[start..self.offsets[l + 1]]
    }

    /// Clamps every weight and bias to `[-k, k]`.
    pub fn clip_weights(&mut self, k: f64) {
        for p in &mut self.params {
            *p = p.clamp(-k, k);
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.abs()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        self.forward_ws(x, &mut ws);
        Ok(ws.acts.last().unwrap().clone())
    }

    /// Scalar output of a single-output net, unchecked.
    pub(crate) fn eval_scalar(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.forward_ws(x, ws);
        ws.acts.last().unwrap()[0]
    }

    /// Forward pass storing every post-activation in `ws.acts` (the last
    /// entry is the affine output).
    pub(crate) fn forward_ws<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        let layers = self.num_layers();
        ws.acts.resize_with(layers + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        for l in 0..layers {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let w = self.layer_weights(l);
            let b = self.layer_bias(l);
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for r in 0..dout {
                let row = &w[r * din..(r + 1) * din];
                let mut acc = b[r];
                for (wi, xi) in row.iter().zip(input) {
                    acc += wi * xi;
                }
                out.push(if l + 1 < layers && acc <= 0.0 { 0.0 } else { acc });
            }
        }
        &ws.acts[layers]
    }

    /// Adds `scale * d(upstream . f(x))/d params` to `grad` and returns the
    /// input gradient `d(upstream . f(x))/dx` (unscaled) in `ws`.
    ///
    /// Requires a preceding `forward_ws` on the same `x` and `ws`.
    pub(crate) fn backward_ws<'w>(
        &self,
        upstream: &[f64],
        scale: f64,
        grad: &mut [f64],
        ws: &'w mut Workspace,
    ) -> &'w [f64] {
        let layers = self.num_layers();
        ws.delta.clear();
        ws.delta.extend_from_slice(upstream);
        for l in (0..layers).rev() {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let input = &ws.acts[l];
            let wstart = self.offsets[l];
            let bstart = wstart + din * dout;
            for r in 0..dout {
                let d = ws.delta[r];
                if d == 0.0 {
                    continue;
                }
                let sd = scale * d;
                grad[bstart + r] += sd;
                let g = &mut grad[wstart + r * din..wstart + (r + 1) * din];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += sd * xi;
                }
            }
            let w = self.layer_weights(l);
            ws.next.clear();
            ws.next.resize(din, 0.0);
            for r in 0..dout {
                let d = ws.delta[r];
                if d == 0.0 {
                    continue;
                }
                for (n, wi) in ws.next.iter_mut().zip(&w[r * din..(r + 1) * din]) {
                    *n += d * wi;
                }
            }
            if l > 0 {
                // relu'(0) = 0: inactive units carry stored activation 0
                for (n, a) in ws.next.iter_mut().zip(&ws.acts[l]) {
                    if *a <= 0.0 {
                        *n = 0.0;
                    }
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.next);
        }
        &ws.delta
    }

    /// Gradients of `upstream . f(x)` with respect to the flat parameter
    /// vector and to `x`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "upstream has dimension {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut ws = Workspace::default();
        let mut grad = vec![0.0; self.num_params()];
        self.forward_ws(x, &mut ws);
        let gx = self.backward_ws(upstream, 1.0, &mut grad, &mut ws).to_vec();
        Ok((grad, gx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent evaluation path: explicit nested loops over layer
    /// matrices rebuilt from the flat vector.
    fn reference_forward(net: &ReluNet, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let layers = net.num_layers();
        for l in 0..layers {
            let (din, dout) = (net.widths()[l], net.widths()[l + 1]);
            let w = net.layer_weights(l);
            let b = net.layer_bias(l);
            let mut out = vec![0.0; dout];
            for r in 0..dout {
                out[r] = b[r] + (0..din).map(|c| w[r * din + c] * h[c]).sum::<f64>();
                if l + 1 < layers {
                    out[r] = out[r].max(0.0);
                }
            }
            h = out;
        }
        h
    }

    #[test]
    fn zero_net_and_relu_net() {
        let z = ReluNet::zeros(&[3, 5, 2], None).unwrap();
        assert_eq!(z.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let relu = ReluNet::from_layers(&[1, 1, 1], &[(vec![1.0], vec![0.0]), (vec![1.0], vec![0.0])], None).unwrap();
        assert_eq!(relu.forward(&[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(relu.forward(&[3.0]).unwrap(), vec![3.0]);
        assert!(relu.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let widths = [3, rng.random_range(1..9), rng.random_range(1..9), 2];
            let net = ReluNet::init(&widths, None, &mut rng).unwrap();
            let net = net.clone().with_params(net.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = reference_forward(&net, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn affine_gradient_by_hand() {
        let net = ReluNet::from_layers(&[1, 1], &[(vec![2.5], vec![-1.0])], None).unwrap();
        let (g, gx) = net.backward(&[0.7], &[1.0]).unwrap();
        assert_eq!(g, vec![0.7, 1.0]);
        assert_eq!(gx, vec![2.5]);
        let (g, gx) = net.backward(&[0.7], &[0.0]).unwrap();
        assert!(g.iter().chain(&gx).all(|&v| v == 0.0));
    }

    #[test]
    fn init_respects_bound_and_clip_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ReluNet::init(&[1, 2, 1], Some(0.1), &mut rng).unwrap();
        assert!(net.max_abs_param() <= 0.1);
        net.params_mut()[0] = 3.7;
        net.clip_weights(1.0);
        assert_eq!(net.params()[0], 1.0);
        let before = net.clone();
        net.clip_weights(1.0);
        assert_eq!(before, net);
    }
}
