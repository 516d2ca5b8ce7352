//! Graph sparsification for deep GCN-family models: per-layer adjacency
//! masks pruned by gradient magnitude (SnoHv1) or by feature convergence
//! (SnoHv2), plus the baselines they are compared against.

pub mod baselines;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod gradcheck;
pub mod graph;
pub mod report;
pub mod snowflake;
pub mod train;

pub use engine::{EngineError, ModelConfig, ModelState, Variant};
pub use graph::{Graph, LayerMaskSet, NormalizedAdjacency};
pub use report::RunReport;
pub use train::{RunError, RunOutput, TrainConfig};
