use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::config_space::Configuration;
use crate::gnn::train::chunk_range;

/// Which training nodes a worker owns: chunk `worker` of every global batch
/// when each batch is split into `n_workers` contiguous chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPartition {
    pub worker: usize,
    pub n_workers: usize,
    pub node_count: usize,
    pub global_batch: usize,
}

impl DataPartition {
    /// This worker's share of one global batch.
    pub fn chunk<'a>(&self, batch: &'a [u32]) -> &'a [u32] {
        &batch[chunk_range(batch.len(), self.n_workers, self.worker)]
    }

    /// Every node this worker trains on for an epoch order `perm`.
    pub fn node_ids(&self, perm: &[u32]) -> Vec<u32> {
        perm.chunks(self.global_batch)
            .flat_map(|b| self.chunk(b).iter().copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        let full = self.node_count / self.global_batch;
        let tail = self.node_count % self.global_batch;
        full * chunk_range(self.global_batch, self.n_workers, self.worker).len()
            + chunk_range(tail, self.n_workers, self.worker).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub worker_id: usize,
    pub sampling_core_ids: Vec<u32>,
    pub training_core_ids: Vec<u32>,
    pub data_partition: DataPartition,
    pub per_process_batch: usize,
}

impl WorkerSpec {
    pub fn all_core_ids(&self) -> Vec<u32> {
        let mut v = self.sampling_core_ids.clone();
        v.extend(&self.training_core_ids);
        v
    }
}

/// Split cores, data and batch across `cfg.n_processes` workers. Worker `i`
/// takes the next `s + t` core ids, sampling first.
pub fn plan_workers(
    cfg: &Configuration,
    total_cores: u32,
    train_node_count: usize,
    global_batch: usize,
) -> Result<Vec<WorkerSpec>, EngineError> {
    let positive = cfg.n_processes >= 1 && cfg.n_sampling_cores >= 1 && cfg.n_training_cores >= 1;
    if !positive || cfg.cores_used() > u64::from(total_cores) {
        return Err(EngineError::ConfigurationRejected(format!(
            "{cfg} does not fit in {total_cores} cores"
        )));
    }
    let n = cfg.n_processes as usize;
    if global_batch < n {
        return Err(EngineError::ConfigurationRejected(format!(
            "global batch {global_batch} is smaller than {n} processes"
        )));
    }
    let s = cfg.n_sampling_cores;
    let t = cfg.n_training_cores;
    Ok((0..n)
        .map(|i| {
            let base = i as u32 * (s + t);
            WorkerSpec {
                worker_id: i,
                sampling_core_ids: (base..base + s).collect(),
                training_core_ids: (base + s..base + s + t).collect(),
                data_partition: DataPartition {
                    worker: i,
                    n_workers: n,
                    node_count: train_node_count,
                    global_batch,
                },
                per_process_batch: chunk_range(global_batch, n, i).len(),
            }
        })
        .collect())
}

/// Check the planning invariants: disjoint masks with the requested sizes,
/// ids below `total_cores`, batches summing to the global batch.
pub fn check_plan(
    specs: &[WorkerSpec],
    cfg: &Configuration,
    total_cores: u32,
    global_batch: usize,
) -> Result<(), String> {
    let mut seen = vec![false; total_cores as usize];
    for spec in specs {
        if spec.sampling_core_ids.len() != cfg.n_sampling_cores as usize
            || spec.training_core_ids.len() != cfg.n_training_cores as usize
        {
            return Err(format!("worker {} has the wrong core counts", spec.worker_id));
        }
        for c in spec.all_core_ids() {
            let slot = seen
                .get_mut(c as usize)
                .ok_or_else(|| format!("core {c} >= {total_cores}"))?;
            if *slot {
                return Err(format!("core {c} assigned twice"));
            }
            *slot = true;
        }
    }
    let batch: usize = specs.iter().map(|s| s.per_process_batch).sum();
    if batch != global_batch {
        return Err(format!("per-process batches sum to {batch}, not {global_batch}"));
    }
    Ok(())
}
