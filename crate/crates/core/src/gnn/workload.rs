//! Aggregation workload of a batch, split or whole.
//!
//! The workload of a target set is the number of aggregation edges over all
//! layers of its full (unsampled) L-hop expansion: layer `l` contributes one
//! edge per neighbour of every node within `L - l` hops. Splitting a batch
//! recomputes any aggregation that the chunks used to share.

use super::graph::CsrGraph;
use super::sampler::neighbor_sample;
use super::train::chunk_range;
use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadCount {
    pub edges_unsplit: usize,
    pub edges_split_total: usize,
}

impl WorkloadCount {
    pub fn inflation(&self) -> f64 {
        if self.edges_unsplit == 0 {
            1.0
        } else {
            self.edges_split_total as f64 / self.edges_unsplit as f64
        }
    }
}

/// Aggregation edges of the full `layers`-hop expansion of `targets`.
pub fn expansion_edges(graph: &CsrGraph, targets: &[u32], layers: usize) -> Result<usize, WorkloadError> {
    if targets.is_empty() {
        return Ok(0);
    }
    let sub = neighbor_sample(graph, targets, &vec![usize::MAX; layers], 0)?;
    Ok(sub.edge_count())
}

/// Workload of `batch` as one unit and as `n_splits` contiguous chunks.
pub fn measure_workload(
    graph: &CsrGraph,
    batch: &[u32],
    n_splits: usize,
    layers: usize,
) -> Result<WorkloadCount, WorkloadError> {
    if n_splits == 0 {
        return Err(WorkloadError::Config("n_splits must be positive".into()));
    }
    let edges_unsplit = expansion_edges(graph, batch, layers)?;
    let mut edges_split_total = 0;
    for i in 0..n_splits {
        edges_split_total += expansion_edges(graph, &batch[chunk_range(batch.len(), n_splits, i)], layers)?;
    }
    Ok(WorkloadCount {
        edges_unsplit,
        edges_split_total,
    })
}

/// Two-target toy graph: targets 0 and 1 both neighbour node 2, which
/// aggregates nodes 3 and 4.
pub fn shared_neighbor_toy() -> CsrGraph {
    use super::matrix::Matrix;
    CsrGraph::from_edges(5, &[(0, 2), (1, 2), (2, 3), (2, 4)], Matrix::zeros(5, 1), vec![0; 5])
        .expect("toy graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::graph::{generate_graph, GeneratorSpec, GraphKind};

    #[test]
    fn toy_counts() {
        let g = shared_neighbor_toy();
        let w = measure_workload(&g, &[0, 1], 2, 2).unwrap();
        // hop 0: 0<-2, 1<-2; hop 1 adds 2's four aggregation edges
        assert_eq!(w.edges_unsplit, 8);
        // each half: 0<-2, then 0<-2 and 2<-{0,1,3,4}
        assert_eq!(w.edges_split_total, 12);
        let one = measure_workload(&g, &[0, 1], 1, 2).unwrap();
        assert_eq!(one.edges_unsplit, one.edges_split_total);
    }

    #[test]
    fn subadditive_on_random_graphs() {
        for seed in 0..5 {
            let g = generate_graph(&GeneratorSpec {
                kind: GraphKind::ErdosRenyi,
                nodes: 80,
                param: 0.03,
                feature_dim: 1,
                classes: 2,
                seed,
            })
            .unwrap();
            let batch: Vec<u32> = (0..16).map(|i| i * 5).collect();
            for n in [1, 2, 4, 8] {
                let w = measure_workload(&g, &batch, n, 2).unwrap();
                assert!(w.edges_split_total >= w.edges_unsplit);
            }
        }
    }
}
