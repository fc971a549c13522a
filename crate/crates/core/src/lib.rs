//! Bilevel hyperparameter and feature-subset search for small feed-forward
//! networks on tabular data. The upper level is a swarm of simulated qubit
//! registers whose measurements decode to candidate configurations; the
//! lower level trains each candidate briefly and scores it by validation
//! ROC-AUC.
//!
//! Numerical code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod data;
pub mod encoding;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod optimizer;
pub mod qsim;
pub mod scalar;
pub mod trace;

#[cfg(test)]
mod testutil;

pub use encoding::{default_space, DecodedPoint, DimensionSpec, HyperparamVector, SpaceSpec};
pub use optimizer::{Objective, OptimizerConfig, RunOutcome};
pub use qsim::{NoiseKind, NoiseSpec};
pub use scalar::Scalar;

pub type Qubit = qsim::QubitState<f64>;
pub type Register = qsim::QubitRegister<f64>;
pub type Swarm = optimizer::SwarmState<f64>;
pub type Mlp = nn::MlpModel<f64>;
pub type Objective64 = nn::NnObjective<f64>;
