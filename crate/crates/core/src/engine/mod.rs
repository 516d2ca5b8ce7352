//! Full-batch GCN / ResGCN / JKNet training over per-layer masked
//! adjacency, with analytic gradients for weights and adjacency entries.

mod backward;
mod fd;
mod forward;
pub mod kernels;
mod model;
mod optim;
mod probe;

use thiserror::Error;

pub use backward::{backward, AdjacencyGrads, Gradients};
pub(crate) use backward::backward_impl;
pub use fd::{finite_diff_grad, FiniteDiff, PerturbTarget};
pub use forward::{
    accuracy, forward, forward_eval, forward_parallel, forward_resumed, loss_and_accuracy, ForwardTape,
};
pub use model::{derived_rng, init_params, Activation, ModelConfig, ModelState, Variant};
pub(crate) use model::splitmix64;
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use probe::{cosine_distance_per_node, cosine_distance_rows, NodeDistances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite activations at layer {layer}")]
    NonFinite { layer: usize },
    #[error("non-finite gradient for {param}")]
    NonFiniteGradient { param: String },
    #[error("split is empty")]
    EmptySplit,
    #[error("tape was recorded at step {tape_step} but the state is at step {state_step}")]
    StaleTape { tape_step: u64, state_step: u64 },
    #[error("adjacency entry {edge} at layer {layer} is masked")]
    MaskedTarget { layer: usize, edge: usize },
    #[error("perturbation target out of range: {0}")]
    TargetOutOfRange(String),
}
