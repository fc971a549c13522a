//! Feed-forward networks trained from scratch: the lower-level problem.

mod model;
mod objective;
mod train;


use thiserror::Error;

pub use model::{build, sigmoid, softmax_rows, ArchKind, Architecture, Cache, Dense, MlpModel};
pub use objective::{configure, final_fit, fit, score, FinalFit, NnObjective, ScoreSet};
pub use train::{cross_entropy, eval_loss, l2_penalty, loss_and_grad, train, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid network configuration: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged (non-finite loss)")]
    Diverged,
}
