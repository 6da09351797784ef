//! Mini-batch GNN training workload built from scratch.
//!
//! [`graph`] holds CSR graphs and their generators, [`sampler`] builds
//! per-batch subgraphs, [`model`] implements GCN/GraphSAGE forward and
//! backward passes, [`workload`] counts aggregation edges, and [`train`] ties
//! them into epochs.

pub mod graph;
pub mod matrix;
pub mod model;
pub mod sampler;
pub mod train;
pub mod workload;

use thiserror::Error;

pub use graph::{generate_graph, CsrGraph, GeneratorSpec, GraphKind};
pub use matrix::Matrix;
pub use model::{forward_backward, ModelKind, ModelParams, StepOutput};
pub use sampler::{neighbor_sample, shadow_sample, SampledSubgraph, SamplerConfig, SamplerKind};
pub use train::{EpochMetrics, GraphSource, TrainJob};
pub use workload::{measure_workload, WorkloadCount};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("non-finite value in layer {layer}")]
    Numerical { layer: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
