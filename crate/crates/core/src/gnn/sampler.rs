//! Mini-batch subgraph construction.
//!
//! A [`SampledSubgraph`] stores its nodes so that every layer's node set is a
//! prefix of the one below it: `node_ids[..layer_sizes[l]]` are the nodes
//! whose layer-`l` representation is computed. Block `l - 1` holds, for each
//! of those nodes, the local ids of the layer-`(l - 1)` nodes it aggregates.
//!
//! Sampling is keyed per node: the neighbours drawn for node `v` at hop `h`
//! depend only on `(key, h, v)`, so a node's neighbourhood does not depend on
//! which other targets share its batch.

use std::collections::HashMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::CsrGraph;
use super::WorkloadError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Neighbor,
    Shadow,
}

impl std::str::FromStr for SamplerKind {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neighbor" => Ok(Self::Neighbor),
            "shadow" => Ok(Self::Shadow),
            _ => Err(WorkloadError::Config(format!("unknown sampler {s:?} (expected neighbor or shadow)"))),
        }
    }
}

/// `fanouts` has one entry per GNN layer for neighbor sampling (`fanouts[0]`
/// is the input layer, farthest from the targets) and one entry per hop of
/// the localized ball for ShaDow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub fanouts: Vec<usize>,
}

impl SamplerConfig {
    pub fn validate(&self, layers: usize) -> Result<(), WorkloadError> {
        if self.fanouts.is_empty() || self.fanouts.contains(&0) {
            return Err(WorkloadError::Config("fanouts must be non-empty and >= 1".into()));
        }
        if self.kind == SamplerKind::Neighbor && self.fanouts.len() != layers {
            return Err(WorkloadError::Config(format!(
                "neighbor sampling needs {layers} fanouts, got {}",
                self.fanouts.len()
            )));
        }
        Ok(())
    }
}

/// Aggregation edges from `dst_count` destination nodes into a source layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub dst_count: usize,
    pub src_count: usize,
    pub offsets: Vec<usize>,
    pub sources: Vec<u32>,
}

impl Block {
    #[inline]
    pub fn sources_of(&self, dst: usize) -> &[u32] {
        &self.sources[self.offsets[dst]..self.offsets[dst + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.sources.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSubgraph {
    /// Local to global node ids.
    pub node_ids: Vec<u32>,
    /// Full-graph degree of each local node.
    pub degrees: Vec<usize>,
    /// Length `L + 1`, non-increasing; `layer_sizes[0] == node_ids.len()`.
    pub layer_sizes: Vec<usize>,
    pub blocks: Vec<Block>,
    /// Local id of each requested target, duplicates preserved.
    pub targets: Vec<u32>,
}

impl SampledSubgraph {
    pub fn num_layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn edge_count(&self) -> usize {
        self.blocks.iter().map(Block::edge_count).sum()
    }

    /// Aggregation edges as global `(dst, src)` pairs, per block.
    pub fn global_edges(&self) -> Vec<Vec<(u32, u32)>> {
        self.blocks
            .iter()
            .map(|b| {
                (0..b.dst_count)
                    .flat_map(|d| b.sources_of(d).iter().map(move |&s| (d, s)))
                    .map(|(d, s)| (self.node_ids[d], self.node_ids[s as usize]))
                    .collect()
            })
            .collect()
    }

    pub fn check_invariants(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Shape(m.to_string()));
        if self.layer_sizes.len() != self.blocks.len() + 1 {
            return bad("layer_sizes length");
        }
        if self.layer_sizes[0] != self.node_ids.len() || self.degrees.len() != self.node_ids.len() {
            return bad("node table length");
        }
        if self.layer_sizes.windows(2).any(|w| w[0] < w[1]) {
            return bad("layer sizes increase");
        }
        for (l, b) in self.blocks.iter().enumerate() {
            if b.dst_count != self.layer_sizes[l + 1] || b.src_count != self.layer_sizes[l] {
                return bad("block dimensions");
            }
            if b.offsets.len() != b.dst_count + 1 || *b.offsets.last().unwrap() != b.sources.len() {
                return bad("block offsets");
            }
            if b.sources.iter().any(|&s| s as usize >= b.src_count) {
                return bad("block source out of range");
            }
        }
        let top = *self.layer_sizes.last().unwrap();
        if self.targets.iter().any(|&t| t as usize >= top) {
            return bad("target outside the output layer");
        }
        Ok(())
    }
}

/// Up to `fanout` neighbours of `v`, uniformly without replacement, in
/// adjacency order.
pub fn sample_neighbors(graph: &CsrGraph, v: u32, fanout: usize, key: u64, hop: usize) -> Vec<u32> {
    let nbrs = graph.neighbors(v);
    if fanout >= nbrs.len() {
        return nbrs.to_vec();
    }
    let mut rng = rng::keyed(&[key, hop as u64, u64::from(v)]);
    let mut picked = index::sample(&mut rng, nbrs.len(), fanout).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| nbrs[i]).collect()
}

fn check_targets(graph: &CsrGraph, targets: &[u32]) -> Result<(), WorkloadError> {
    if targets.is_empty() {
        return Err(WorkloadError::Config("empty target set".into()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= graph.node_count()) {
        return Err(WorkloadError::Shape(format!("target {t} >= node count {}", graph.node_count())));
    }
    Ok(())
}

/// Layer-wise neighbor sampling. Hop 0 expands the targets with
/// `fanouts[L - 1]`; use `usize::MAX` fanouts for full expansion.
pub fn neighbor_sample(
    graph: &CsrGraph,
    targets: &[u32],
    fanouts: &[usize],
    key: u64,
) -> Result<SampledSubgraph, WorkloadError> {
    check_targets(graph, targets)?;
    let layers = fanouts.len();
    let mut node_ids: Vec<u32> = Vec::new();
    let mut local: HashMap<u32, u32> = HashMap::new();
    let target_local: Vec<u32> = targets
        .iter()
        .map(|&t| {
            *local.entry(t).or_insert_with(|| {
                node_ids.push(t);
                (node_ids.len() - 1) as u32
            })
        })
        .collect();

    let mut sizes = vec![node_ids.len()];
    let mut blocks_rev = Vec::with_capacity(layers);
    for hop in 0..layers {
        let fanout = fanouts[layers - 1 - hop];
        let dst_count = node_ids.len();
        let picks: Vec<Vec<u32>> = node_ids
            .par_iter()
            .map(|&v| sample_neighbors(graph, v, fanout, key, hop))
            .collect();
        let mut offsets = Vec::with_capacity(dst_count + 1);
        let mut sources = Vec::new();
        offsets.push(0);
        for pick in picks {
            for u in pick {
                let id = *local.entry(u).or_insert_with(|| {
                    node_ids.push(u);
                    (node_ids.len() - 1) as u32
                });
                sources.push(id);
            }
            offsets.push(sources.len());
        }
        sizes.push(node_ids.len());
        blocks_rev.push(Block {
            dst_count,
            src_count: node_ids.len(),
            offsets,
            sources,
        });
    }
    sizes.reverse();
    blocks_rev.reverse();
    let degrees = node_ids.iter().map(|&v| graph.degree(v)).collect();
    Ok(SampledSubgraph {
        node_ids,
        degrees,
        layer_sizes: sizes,
        blocks: blocks_rev,
        targets: target_local,
    })
}

/// Localized sampled ball around `root`: `local_fanouts.len()` hops, drawing
/// per node from a stream keyed by the root. Returns nodes in discovery
/// order with `root` first.
pub fn shadow_ball(graph: &CsrGraph, root: u32, local_fanouts: &[usize], key: u64) -> Vec<u32> {
    let ball_key = rng::mix(&[key, u64::from(root)]);
    let mut nodes = vec![root];
    let mut seen: HashMap<u32, ()> = HashMap::from([(root, ())]);
    let mut frontier = vec![root];
    for (hop, &fanout) in local_fanouts.iter().enumerate() {
        let mut next = Vec::new();
        for &v in &frontier {
            for u in sample_neighbors(graph, v, fanout, ball_key, hop) {
                if seen.insert(u, ()).is_none() {
                    nodes.push(u);
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    nodes
}

/// ShaDow sampling: each target gets its own localized ball, and all `layers`
/// GNN layers run over the induced subgraph of that ball. Balls of different
/// targets are kept disjoint (a node in two balls appears twice), roots come
/// first, and each block holds every induced edge.
pub fn shadow_sample(
    graph: &CsrGraph,
    targets: &[u32],
    local_fanouts: &[usize],
    layers: usize,
    key: u64,
) -> Result<SampledSubgraph, WorkloadError> {
    check_targets(graph, targets)?;
    if layers == 0 {
        return Err(WorkloadError::Config("at least one layer is required".into()));
    }
    let balls: Vec<Vec<u32>> = targets
        .par_iter()
        .map(|&t| shadow_ball(graph, t, local_fanouts, key))
        .collect();

    // roots occupy local ids 0..B, the rest of ball i follows in order
    let b = targets.len();
    let mut node_ids: Vec<u32> = targets.to_vec();
    let mut ball_local: Vec<Vec<u32>> = Vec::with_capacity(b);
    for (i, ball) in balls.iter().enumerate() {
        let mut ids = Vec::with_capacity(ball.len());
        ids.push(i as u32);
        for &v in &ball[1..] {
            ids.push(node_ids.len() as u32);
            node_ids.push(v);
        }
        ball_local.push(ids);
    }
    let total = node_ids.len();
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); total];
    for (ball, ids) in balls.iter().zip(&ball_local) {
        let pos: HashMap<u32, u32> = ball.iter().zip(ids).map(|(&g, &l)| (g, l)).collect();
        for (&v, &lv) in ball.iter().zip(ids) {
            adjacency[lv as usize] = graph
                .neighbors(v)
                .iter()
                .filter_map(|u| pos.get(u).copied())
                .collect();
        }
    }
    let mut offsets = Vec::with_capacity(total + 1);
    let mut sources = Vec::new();
    offsets.push(0);
    for adj in adjacency {
        sources.extend(adj);
        offsets.push(sources.len());
    }
    let block = Block {
        dst_count: total,
        src_count: total,
        offsets,
        sources,
    };
    let degrees = node_ids.iter().map(|&v| graph.degree(v)).collect();
    Ok(SampledSubgraph {
        node_ids,
        degrees,
        layer_sizes: vec![total; layers + 1],
        blocks: vec![block; layers],
        targets: (0..b as u32).collect(),
    })
}

/// Dispatch on the sampler kind.
pub fn sample(
    graph: &CsrGraph,
    targets: &[u32],
    cfg: &SamplerConfig,
    layers: usize,
    key: u64,
) -> Result<SampledSubgraph, WorkloadError> {
    match cfg.kind {
        SamplerKind::Neighbor => neighbor_sample(graph, targets, &cfg.fanouts, key),
        SamplerKind::Shadow => shadow_sample(graph, targets, &cfg.fanouts, layers, key),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, HashSet, VecDeque};

    use super::*;
    use crate::gnn::graph::{generate_graph, GeneratorSpec, GraphKind};
    use crate::gnn::matrix::Matrix;

    fn er(nodes: usize, p: f64, seed: u64) -> CsrGraph {
        generate_graph(&GeneratorSpec {
            kind: GraphKind::ErdosRenyi,
            nodes,
            param: p,
            feature_dim: 2,
            classes: 2,
            seed,
        })
        .unwrap()
    }

    fn from_edges(n: usize, edges: &[(u32, u32)]) -> CsrGraph {
        CsrGraph::from_edges(n, edges, Matrix::zeros(n, 1), vec![0; n]).unwrap()
    }

    /// Straightforward re-implementation: per hop, walk the current node list
    /// and draw each node's sample from its own keyed stream.
    fn reference_edges(g: &CsrGraph, targets: &[u32], fanouts: &[usize], key: u64) -> Vec<(u32, u32)> {
        use rand::seq::index::sample;
        let mut nodes: Vec<u32> = Vec::new();
        for &t in targets {
            if !nodes.contains(&t) {
                nodes.push(t);
            }
        }
        let mut edges = Vec::new();
        for hop in 0..fanouts.len() {
            let fanout = fanouts[fanouts.len() - 1 - hop];
            let current = nodes.clone();
            for v in current {
                let nb = g.neighbors(v);
                let chosen: Vec<u32> = if nb.len() <= fanout {
                    nb.to_vec()
                } else {
                    let mut r = rng::keyed(&[key, hop as u64, v as u64]);
                    let mut idx = sample(&mut r, nb.len(), fanout).into_vec();
                    idx.sort();
                    idx.iter().map(|&i| nb[i]).collect()
                };
                for u in chosen {
                    edges.push((v, u));
                    if !nodes.contains(&u) {
                        nodes.push(u);
                    }
                }
            }
        }
        edges.sort();
        edges
    }

    #[test]
    fn matches_reference_implementation() {
        let g = er(100, 0.08, 5);
        let targets = [3, 17, 42, 99, 3];
        let fanouts = [4, 3, 2];
        let sub = neighbor_sample(&g, &targets, &fanouts, 77).unwrap();
        sub.check_invariants().unwrap();
        let mut got: Vec<(u32, u32)> = sub.global_edges().concat();
        got.sort();
        assert_eq!(got, reference_edges(&g, &targets, &fanouts, 77));
        assert_eq!(sub.targets, vec![0, 1, 2, 3, 0]);
    }

    #[test]
    fn pure_function_of_inputs() {
        let g = er(100, 0.08, 5);
        let a = neighbor_sample(&g, &[1, 2, 3], &[5, 5], 9).unwrap();
        let b = neighbor_sample(&g, &[1, 2, 3], &[5, 5], 9).unwrap();
        assert_eq!(a, b);
        let c = neighbor_sample(&g, &[1, 2, 3], &[5, 5], 10).unwrap();
        assert_ne!(a.global_edges(), c.global_edges());
    }

    #[test]
    fn large_fanout_gives_full_neighborhood() {
        let g = er(60, 0.05, 1);
        let sub = neighbor_sample(&g, &[0, 5], &[100, 100], 3).unwrap();
        let blocks = sub.global_edges();
        // the last block expands the targets: exactly their adjacency
        let mut hop0: Vec<(u32, u32)> = blocks[1].clone();
        hop0.sort();
        let mut want: Vec<(u32, u32)> = [0u32, 5]
            .iter()
            .flat_map(|&v| g.neighbors(v).iter().map(move |&u| (v, u)))
            .collect();
        want.sort();
        assert_eq!(hop0, want);
        // every node within one hop has its whole adjacency in block 0
        assert_eq!(blocks[0].len(), (0..sub.layer_sizes[1]).map(|i| sub.degrees[i]).sum::<usize>());
    }

    #[test]
    fn star_center_with_fanout_one() {
        let g = from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        let sub = neighbor_sample(&g, &[0], &[1], 0).unwrap();
        assert_eq!(sub.edge_count(), 1);
        assert_eq!(sub.layer_sizes, vec![2, 1]);
    }

    #[test]
    fn isolated_target() {
        let g = from_edges(3, &[(1, 2)]);
        let sub = neighbor_sample(&g, &[0], &[2, 2], 0).unwrap();
        assert_eq!(sub.edge_count(), 0);
        assert_eq!(sub.node_ids, vec![0]);
        let sh = shadow_sample(&g, &[0], &[3, 3], 2, 0).unwrap();
        assert_eq!(sh.node_ids, vec![0]);
        assert_eq!(sh.edge_count(), 0);
    }

    fn bfs_ball(g: &CsrGraph, root: u32, hops: usize) -> BTreeSet<u32> {
        let mut dist = HashMap::from([(root, 0usize)]);
        let mut q = VecDeque::from([root]);
        while let Some(v) = q.pop_front() {
            let d = dist[&v];
            if d == hops {
                continue;
            }
            for &u in g.neighbors(v) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(u) {
                    e.insert(d + 1);
                    q.push_back(u);
                }
            }
        }
        dist.into_keys().collect()
    }

    #[test]
    fn shadow_matches_bfs_when_fanouts_cover_the_ball() {
        let g = er(50, 0.06, 8);
        for root in [0u32, 7, 31] {
            let sub = shadow_sample(&g, &[root], &[50, 50], 3, 1).unwrap();
            sub.check_invariants().unwrap();
            let ball = bfs_ball(&g, root, 2);
            let got: BTreeSet<u32> = sub.node_ids.iter().copied().collect();
            assert_eq!(got, ball);
            let induced: usize = ball
                .iter()
                .map(|&v| g.neighbors(v).iter().filter(|u| ball.contains(u)).count())
                .sum();
            assert!(sub.blocks.iter().all(|b| b.edge_count() == induced));
            assert_eq!(sub.node_ids[0], root);
        }
    }

    #[test]
    fn shadow_balls_are_per_target() {
        let g = er(80, 0.08, 2);
        let both = shadow_sample(&g, &[4, 9], &[3, 2], 2, 5).unwrap();
        let a = shadow_sample(&g, &[4], &[3, 2], 2, 5).unwrap();
        let b = shadow_sample(&g, &[9], &[3, 2], 2, 5).unwrap();
        assert_eq!(both.node_ids.len(), a.node_ids.len() + b.node_ids.len());
        assert_eq!(both.edge_count(), a.edge_count() + b.edge_count());
        let ball: HashSet<u32> = shadow_ball(&g, 4, &[3, 2], 5).into_iter().collect();
        assert!(ball.len() <= 1 + 3 + 3 * 2);
    }

    #[test]
    fn validation() {
        let cfg = SamplerConfig {
            kind: SamplerKind::Neighbor,
            fanouts: vec![5, 5],
        };
        assert!(cfg.validate(2).is_ok());
        assert!(cfg.validate(3).is_err());
        assert!(SamplerConfig { kind: SamplerKind::Shadow, fanouts: vec![0] }.validate(2).is_err());
        assert!("bogus".parse::<SamplerKind>().is_err());
        let g = er(10, 0.5, 0);
        assert!(neighbor_sample(&g, &[10], &[1], 0).is_err());
        assert!(neighbor_sample(&g, &[], &[1], 0).is_err());
    }
}
