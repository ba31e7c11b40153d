//! Building blocks for group-invariant GAN experiments: finite matrix
//! groups, fundamental domains, covering numbers, ReLU networks, exact
//! Wasserstein-1 and the scaling-law sweeps built on top of them.

pub mod covering;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod group;
pub mod measure;
pub mod nn;
pub mod points;
pub mod seeds;
pub mod targets;
pub mod training;

pub use error::{Error, Result};
pub use group::{FiniteGroup, GroupDescriptor, GroupElement};
pub use measure::EmpiricalMeasure;
pub use nn::{InvariantDiscriminator, InvariantGenerator, ReluNet, SymmetrizationMode, TransportMap};
pub use training::{RunRecord, TrainConfig};
