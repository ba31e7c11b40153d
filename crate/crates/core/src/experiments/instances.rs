//! Random problem instances shared by the verification suites, the
//! benchmarks and the integration tests.

use std::sync::Arc;

use rand::Rng;

use crate::error::Result;
use crate::group::{make_cyclic_rotation_group, make_product_group, make_reflection_group, FiniteGroup};
use crate::measure::{EmpiricalMeasure, RealFn};
use crate::nn::ReluNet;
use crate::points::Point;

pub fn random_points<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Vec<Point> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// `n` atoms in `[-1, 1]^d` with weights bounded away from zero.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> EmpiricalMeasure {
    let pts = random_points(rng, n, d);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    EmpiricalMeasure::new(pts, raw.iter().map(|w| w / s).collect()).expect("valid random measure")
}

/// The shipped example groups: `C4`, a mirror, `C2 x mirror` in the plane and
/// `C3` in a coordinate plane of `R^3`.
pub fn example_groups() -> Result<Vec<FiniteGroup>> {
    let c2 = make_cyclic_rotation_group(2, 2, (0, 1))?;
    let m0 = make_reflection_group(0, 2)?;
    Ok(vec![
        make_cyclic_rotation_group(4, 2, (0, 1))?,
        m0.clone(),
        make_product_group(&c2, &m0)?,
        make_cyclic_rotation_group(3, 3, (1, 2))?,
    ])
}

pub fn random_group<R: Rng + ?Sized>(rng: &mut R) -> Result<FiniteGroup> {
    let mut groups = example_groups()?;
    let i = rng.random_range(0..groups.len());
    Ok(groups.swap_remove(i))
}

/// Random scalar ReLU net on `R^d` with hidden widths drawn from `2..=6`.
pub fn random_net<R: Rng + ?Sized>(rng: &mut R, d: usize, hidden_layers: usize) -> Result<ReluNet> {
    let mut widths = vec![d];
    widths.extend((0..hidden_layers).map(|_| rng.random_range(2..=6)));
    widths.push(1);
    let mut net = ReluNet::init(&widths, None, rng)?;
    // nonzero biases move the kinks away from the origin
    for p in net.params_mut() {
        *p += rng.random_range(-0.2..0.2);
    }
    Ok(net)
}

pub fn net_function(net: ReluNet) -> RealFn {
    Arc::new(move |x: &[f64]| net.forward(x).expect("input dimension")[0])
}
