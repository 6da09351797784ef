//! Training jobs: data order, batch partitioning, and a plain single-process
//! epoch used as the reference for the multi-process engine.

use std::ops::Range;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{generate_graph, load_graph, CsrGraph, GeneratorSpec, GraphKind};
use super::model::{forward, forward_backward, ModelKind, ModelParams};
use super::sampler::{sample, SamplerConfig, SamplerKind};
use super::WorkloadError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Generated(GeneratorSpec),
    Files { edges: PathBuf, features: PathBuf },
}

impl GraphSource {
    pub fn load(&self) -> Result<CsrGraph, WorkloadError> {
        match self {
            GraphSource::Generated(spec) => generate_graph(spec),
            GraphSource::Files { edges, features } => load_graph(edges, features),
        }
    }
}

/// Everything a worker needs to reproduce the training computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub graph: GraphSource,
    pub model: ModelKind,
    pub sampler: SamplerConfig,
    pub layers: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Key sampling by `(seed, epoch)` only, making every node's sampled
    /// neighbourhood independent of the process layout.
    pub deterministic: bool,
}

impl TrainJob {
    /// Three layers, hidden width 16, fanouts `[15, 10, 5]` (ShaDow `[10, 5]`).
    pub fn new(graph: GraphSource, model: ModelKind, sampler: SamplerKind) -> Self {
        let fanouts = match sampler {
            SamplerKind::Neighbor => vec![15, 10, 5],
            SamplerKind::Shadow => vec![10, 5],
        };
        Self {
            graph,
            model,
            sampler: SamplerConfig { kind: sampler, fanouts },
            layers: 3,
            hidden: 16,
            batch_size: 64,
            learning_rate: 0.05,
            seed: 0,
            deterministic: true,
        }
    }

    /// A generated Erdős–Rényi graph with mean degree about 10.
    pub fn synthetic(nodes: usize, model: ModelKind, sampler: SamplerKind, seed: u64) -> Self {
        let spec = GeneratorSpec {
            kind: GraphKind::ErdosRenyi,
            nodes,
            param: (10.0 / (nodes.max(2) - 1) as f64).min(1.0),
            feature_dim: 16,
            classes: 2,
            seed,
        };
        let mut job = Self::new(GraphSource::Generated(spec), model, sampler);
        job.seed = seed;
        job
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(WorkloadError::Config("layers and hidden width must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(WorkloadError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(WorkloadError::Config("learning rate must be positive".into()));
        }
        self.sampler.validate(self.layers)
    }

    pub fn dims(&self, graph: &CsrGraph) -> Vec<usize> {
        let mut dims = vec![graph.feature_dim()];
        dims.extend(std::iter::repeat_n(self.hidden, self.layers - 1));
        dims.push(graph.num_classes.max(2));
        dims
    }

    pub fn init_params(&self, graph: &CsrGraph) -> Result<ModelParams, WorkloadError> {
        ModelParams::init(self.model, &self.dims(graph), self.seed)
    }

    /// Sampling stream key for one step of one worker.
    pub fn sampling_key(&self, epoch: u64, step: usize, worker: usize) -> u64 {
        if self.deterministic {
            rng::mix(&[self.seed, 0x5E, epoch])
        } else {
            rng::mix(&[self.seed, 0x5E, epoch, worker as u64, step as u64])
        }
    }

    pub fn steps_per_epoch(&self, node_count: usize) -> usize {
        node_count.div_ceil(self.batch_size)
    }
}

/// Seeded shuffle of the training nodes for one epoch.
pub fn epoch_permutation(node_count: usize, seed: u64, epoch: u64) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..node_count as u32).collect();
    perm.shuffle(&mut rng::keyed(&[seed, 0xE0, epoch]));
    perm
}

/// Range of chunk `i` when `len` items are split into `n` contiguous chunks,
/// the first `len % n` of which get one extra item.
pub fn chunk_range(len: usize, n: usize, i: usize) -> Range<usize> {
    let base = len / n;
    let extra = len % n;
    let start = i * base + i.min(extra);
    let size = base + usize::from(i < extra);
    start..start + size
}

/// The global batches of one epoch.
pub fn global_batches(perm: &[u32], batch_size: usize) -> impl Iterator<Item = &[u32]> {
    perm.chunks(batch_size)
}

/// Aggregated metrics over one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// Sum of per-target losses.
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
    pub steps: usize,
}

impl EpochMetrics {
    pub fn mean_loss(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.loss_sum / self.count as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }

    pub fn add(&mut self, loss_mean: f64, correct: usize, count: usize) {
        self.loss_sum += loss_mean * count as f64;
        self.correct += correct;
        self.count += count;
    }
}

/// One single-process epoch of mini-batch SGD with the full global batch.
pub fn train_epoch_reference(
    graph: &CsrGraph,
    params: &mut ModelParams,
    job: &TrainJob,
    epoch: u64,
) -> Result<EpochMetrics, WorkloadError> {
    let perm = epoch_permutation(graph.node_count(), job.seed, epoch);
    let mut metrics = EpochMetrics::default();
    for (step, batch) in global_batches(&perm, job.batch_size).enumerate() {
        let sub = sample(graph, batch, &job.sampler, job.layers, job.sampling_key(epoch, step, 0))?;
        let out = forward_backward(&sub, params, &graph.features, &graph.labels)?;
        params.sgd_step(&out.grads, job.learning_rate);
        metrics.add(out.loss, out.correct, out.count);
        metrics.steps += 1;
    }
    Ok(metrics)
}

/// Accuracy over all nodes with a fixed sampling key.
pub fn full_accuracy(graph: &CsrGraph, params: &ModelParams, job: &TrainJob) -> Result<f64, WorkloadError> {
    let nodes: Vec<u32> = (0..graph.node_count() as u32).collect();
    let mut correct = 0;
    for batch in nodes.chunks(job.batch_size.max(256)) {
        let sub = sample(graph, batch, &job.sampler, job.layers, rng::mix(&[job.seed, 0xACC]))?;
        let logits = forward(&sub, params, &graph.features)?;
        for (i, &v) in batch.iter().enumerate() {
            let row = logits.row(i);
            let pred = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            if pred == graph.labels[v as usize] as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / graph.node_count() as f64)
}
