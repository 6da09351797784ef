//! Worker side of the engine: one process (or thread, in tests) per
//! [`WorkerSpec`]. Sampler threads run one step ahead of trainer threads
//! through a bounded queue.

use std::io::{BufReader, BufWriter, Read, Write};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::affinity::{bind_thread, current_thread_mask, map_cores, BindOutcome};
use super::plan::WorkerSpec;
use super::wire::{read_frame, write_frame, Frame, FrameKind};
use super::EngineError;
use crate::gnn::model::{forward_backward, ModelParams};
use crate::gnn::sampler::{sample, SampledSubgraph};
use crate::gnn::train::{epoch_permutation, global_batches, EpochMetrics, TrainJob};
use crate::gnn::{CsrGraph, WorkloadError};

/// Depth of the sampler-to-trainer queue.
pub const PIPELINE_DEPTH: usize = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkerInit {
    pub job: TrainJob,
    pub spec: WorkerSpec,
    pub binding: bool,
    /// Fault injection: exit without a goodbye at this step of every epoch.
    #[serde(default)]
    pub crash_at_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindReport {
    pub sampling: BindOutcome,
    pub training: BindOutcome,
    /// OS CPU ids requested for the sampling and training threads.
    pub expected_sampling: Option<Vec<usize>>,
    pub expected_training: Option<Vec<usize>>,
    /// Masks read back from each pool thread after binding.
    pub sampling_masks: Vec<Vec<usize>>,
    pub training_masks: Vec<Vec<usize>>,
}

impl BindReport {
    /// True when binding was applied and every thread reports exactly the
    /// requested CPUs.
    pub fn verified(&self) -> bool {
        let check = |outcome: &BindOutcome, expected: &Option<Vec<usize>>, masks: &[Vec<usize>]| {
            outcome.is_applied()
                && expected
                    .as_ref()
                    .is_some_and(|e| masks.iter().all(|m| m == e))
        };
        check(&self.sampling, &self.expected_sampling, &self.sampling_masks)
            && check(&self.training, &self.expected_training, &self.training_masks)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StartMessage {
    pub epoch: u64,
}

/// Bind the calling thread to all of the worker's cores.
pub fn bind_cores(spec: &WorkerSpec) -> BindOutcome {
    bind_thread(&spec.all_core_ids())
}

fn build_pool(
    name: &'static str,
    worker: usize,
    cores: &[u32],
    binding: bool,
) -> Result<(rayon::ThreadPool, BindOutcome, Vec<Vec<usize>>), EngineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cores.len())
        .thread_name(move |i| format!("w{worker}-{name}-{i}"))
        .build()
        .map_err(|e| EngineError::Launch(e.to_string()))?;
    let outcome = if binding {
        let cores = cores.to_vec();
        let outcomes = pool.broadcast(|_| bind_thread(&cores));
        outcomes
            .into_iter()
            .find(|o| !o.is_applied())
            .unwrap_or(BindOutcome::Applied)
    } else {
        BindOutcome::Unsupported("binding disabled".into())
    };
    let masks = pool.broadcast(|_| current_thread_mask().unwrap_or_default());
    Ok((pool, outcome, masks))
}

/// Serve one worker over a framed byte stream until shutdown or end of input.
pub fn worker_main<R: Read, W: Write>(input: R, output: W) -> Result<(), EngineError> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    let frame = read_frame(&mut input)?.ok_or_else(|| EngineError::Protocol("stream closed before init".into()))?;
    if frame.kind != FrameKind::Init {
        return Err(EngineError::Protocol(format!("expected init, got {:?}", frame.kind)));
    }
    let init: WorkerInit = frame.parse_json()?;
    let id = init.spec.worker_id as u32;
    match serve(init, &mut input, &mut output) {
        Ok(()) => Ok(()),
        Err(EngineError::InjectedCrash) => Err(EngineError::InjectedCrash),
        Err(e) => {
            let _ = write_frame(&mut output, &Frame::json(FrameKind::Failure, id, &e.to_string()));
            Err(e)
        }
    }
}

fn serve<R: Read, W: Write>(init: WorkerInit, input: &mut R, output: &mut W) -> Result<(), EngineError> {
    let id = init.spec.worker_id;
    if init.binding {
        bind_cores(&init.spec);
    }
    let graph = Arc::new(init.job.graph.load()?);
    let job = Arc::new(init.job.clone());
    let mut params = job.init_params(&graph)?;

    let (sampling_pool, sampling, sampling_masks) =
        build_pool("sample", id, &init.spec.sampling_core_ids, init.binding)?;
    let (training_pool, training, training_masks) =
        build_pool("train", id, &init.spec.training_core_ids, init.binding)?;
    let report = BindReport {
        sampling,
        training,
        expected_sampling: map_cores(&init.spec.sampling_core_ids),
        expected_training: map_cores(&init.spec.training_core_ids),
        sampling_masks,
        training_masks,
    };
    write_frame(output, &Frame::json(FrameKind::Ready, id as u32, &report))?;

    loop {
        let Some(frame) = read_frame(input)? else {
            return Ok(());
        };
        match frame.kind {
            FrameKind::Params => params.load_tensors(&frame.into_tensors()?)?,
            FrameKind::Start => {
                let msg: StartMessage = frame.parse_json()?;
                let ctx = EpochContext {
                    init: &init,
                    graph: &graph,
                    job: &job,
                    sampling_pool: &sampling_pool,
                    training_pool: &training_pool,
                };
                let metrics = ctx.run(&mut params, msg.epoch, input, output)?;
                write_frame(output, &Frame::json(FrameKind::Done, id as u32, &metrics))?;
            }
            FrameKind::Shutdown => return Ok(()),
            other => return Err(EngineError::Protocol(format!("unexpected {other:?} frame"))),
        }
    }
}

struct EpochContext<'a> {
    init: &'a WorkerInit,
    graph: &'a Arc<CsrGraph>,
    job: &'a Arc<TrainJob>,
    sampling_pool: &'a rayon::ThreadPool,
    training_pool: &'a rayon::ThreadPool,
}

impl EpochContext<'_> {
    fn run<R: Read, W: Write>(
        &self,
        params: &mut ModelParams,
        epoch: u64,
        input: &mut R,
        output: &mut W,
    ) -> Result<EpochMetrics, EngineError> {
        let id = self.init.spec.worker_id;
        let part = self.init.spec.data_partition;
        let perm = epoch_permutation(self.graph.node_count(), self.job.seed, epoch);
        let chunks: Vec<Vec<u32>> = global_batches(&perm, self.job.batch_size)
            .map(|b| part.chunk(b).to_vec())
            .collect();
        let steps = chunks.len();

        let (tx, rx) = sync_channel::<Result<Option<SampledSubgraph>, WorkloadError>>(PIPELINE_DEPTH);
        {
            let graph = Arc::clone(self.graph);
            let job = Arc::clone(self.job);
            self.sampling_pool.spawn(move || {
                for (step, chunk) in chunks.into_iter().enumerate() {
                    let item = if chunk.is_empty() {
                        Ok(None)
                    } else {
                        sample(&graph, &chunk, &job.sampler, job.layers, job.sampling_key(epoch, step, id)).map(Some)
                    };
                    if tx.send(item).is_err() {
                        return;
                    }
                }
            });
        }

        let mut metrics = EpochMetrics::default();
        let mut update = params.zeros_like();
        for step in 0..steps {
            let sub = rx
                .recv()
                .map_err(|_| EngineError::Protocol("sampler stopped early".into()))??;
            if self.init.crash_at_step == Some(step) {
                return Err(EngineError::InjectedCrash);
            }
            let (mut tensors, stats) = match sub {
                Some(sub) => {
                    let out = self.training_pool.install(|| {
                        forward_backward(&sub, params, &self.graph.features, &self.graph.labels)
                    })?;
                    metrics.add(out.loss, out.correct, out.count);
                    (out.grads.to_tensors(), vec![out.loss, out.correct as f64, out.count as f64])
                }
                None => (params.zeros_like().to_tensors(), vec![0.0; 3]),
            };
            metrics.steps += 1;
            tensors.push(stats);
            write_frame(output, &Frame::tensors(FrameKind::Gradients, id as u32, tensors))?;

            let frame = read_frame(input)?.ok_or_else(|| EngineError::Protocol("driver closed mid-epoch".into()))?;
            match frame.kind {
                FrameKind::Averaged => {
                    update.load_tensors(&frame.into_tensors()?)?;
                    params.sgd_step(&update, self.job.learning_rate);
                }
                FrameKind::Shutdown => return Err(EngineError::Protocol("shutdown mid-epoch".into())),
                other => return Err(EngineError::Protocol(format!("expected averaged gradients, got {other:?}"))),
            }
        }
        Ok(metrics)
    }
}
