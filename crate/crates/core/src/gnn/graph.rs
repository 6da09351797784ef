//! Compressed sparse row graphs with node features and labels, synthetic
//! generators, and the on-disk edge-list / feature sidecar formats.

use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::WorkloadError;
use crate::rng;

/// Magic bytes at the start of a feature sidecar.
pub const FEATURE_MAGIC: [u8; 8] = *b"GNNFEAT1";

#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    pub features: Matrix,
    pub labels: Vec<u32>,
    pub num_classes: usize,
}

impl CsrGraph {
    /// Build an undirected graph; each pair is stored in both directions,
    /// duplicates and self loops are dropped, adjacency lists are sorted.
    pub fn from_edges(
        node_count: usize,
        edges: &[(u32, u32)],
        features: Matrix,
        labels: Vec<u32>,
    ) -> Result<Self, WorkloadError> {
        if features.rows != node_count || labels.len() != node_count {
            return Err(WorkloadError::Shape(format!(
                "{node_count} nodes but {} feature rows and {} labels",
                features.rows,
                labels.len()
            )));
        }
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u as usize >= node_count || v as usize >= node_count {
                return Err(WorkloadError::Shape(format!(
                    "edge ({u}, {v}) references a node >= {node_count}"
                )));
            }
            if u == v {
                continue;
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        let num_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
        Ok(Self {
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
        })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Directed edge count (twice the undirected count).
    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn raw_neighbors(&self) -> &[u32] {
        &self.neighbors
    }

    /// Undirected edges with `u < v`, in CSR order.
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count() / 2);
        for u in 0..self.node_count() as u32 {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn check_invariants(&self) -> Result<(), WorkloadError> {
        let n = self.node_count();
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(WorkloadError::Shape("offsets decrease".into()));
        }
        if *self.offsets.last().unwrap() != self.neighbors.len() {
            return Err(WorkloadError::Shape("last offset != edge count".into()));
        }
        if self.neighbors.iter().any(|&u| u as usize >= n) {
            return Err(WorkloadError::Shape("neighbor id out of range".into()));
        }
        for u in 0..n as u32 {
            for &v in self.neighbors(u) {
                if self.neighbors(v).binary_search(&u).is_err() {
                    return Err(WorkloadError::Shape(format!("edge {u}->{v} has no reverse")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    ErdosRenyi,
    PreferentialAttachment,
}

/// Generator parameters. `param` is the edge probability for Erdős–Rényi and
/// the number of edges per new node for preferential attachment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GraphKind,
    pub nodes: usize,
    pub param: f64,
    pub feature_dim: usize,
    pub classes: usize,
    pub seed: u64,
}

/// Per-feature distance between two class means that differ in that
/// feature, in units of the noise std.
const CLASS_SEPARATION: f64 = 2.0;

/// Target fraction of intra-class edges.
const HOMOPHILY: f64 = 0.8;

pub fn generate_graph(spec: &GeneratorSpec) -> Result<CsrGraph, WorkloadError> {
    if spec.nodes < 2 {
        return Err(WorkloadError::Config("a generated graph needs at least 2 nodes".into()));
    }
    if spec.classes == 0 || spec.feature_dim == 0 {
        return Err(WorkloadError::Config("classes and feature_dim must be positive".into()));
    }
    let n = spec.nodes;
    let mut feat_rng = rng::keyed(&[spec.seed, 2]);
    let labels: Vec<u32> = (0..n)
        .map(|_| feat_rng.random_range(0..spec.classes as u32))
        .collect();
    let means = Matrix::from_fn(spec.classes, spec.feature_dim, |_, _| {
        if feat_rng.random::<bool>() {
            CLASS_SEPARATION / 2.0
        } else {
            -CLASS_SEPARATION / 2.0
        }
    });
    let features = Matrix::from_fn(n, spec.feature_dim, |r, c| {
        let z: f64 = StandardNormal.sample(&mut feat_rng);
        means.get(labels[r] as usize, c) + z
    });

    let mut edge_rng = rng::keyed(&[spec.seed, 1]);
    let mut edges = Vec::new();
    match spec.kind {
        GraphKind::ErdosRenyi => {
            let p = spec.param;
            if !(0.0..=1.0).contains(&p) {
                return Err(WorkloadError::Config(format!("edge probability {p} outside [0, 1]")));
            }
            if p == 0.0 {
                log::warn!("edge probability 0 produces an edgeless graph");
            }
            // split p into intra/inter-class probabilities with the same
            // expected edge count
            let mut class_sizes = vec![0f64; spec.classes];
            for &l in &labels {
                class_sizes[l as usize] += 1.0;
            }
            let pairs = (n * (n - 1)) as f64 / 2.0;
            let same = class_sizes.iter().map(|c| c * (c - 1.0) / 2.0).sum::<f64>() / pairs;
            let p_in = if same > 0.0 { (p * HOMOPHILY / same).min(1.0) } else { p };
            let p_out = if same < 1.0 { ((p - same * p_in) / (1.0 - same)).clamp(0.0, 1.0) } else { p };
            for u in 0..n as u32 {
                for v in u + 1..n as u32 {
                    let q = if labels[u as usize] == labels[v as usize] { p_in } else { p_out };
                    if q >= 1.0 || edge_rng.random::<f64>() < q {
                        edges.push((u, v));
                    }
                }
            }
        }
        GraphKind::PreferentialAttachment => {
            let m = spec.param.round();
            if m < 1.0 {
                return Err(WorkloadError::Config("preferential attachment needs param >= 1".into()));
            }
            let m = (m as usize).min(n - 1);
            // endpoint list: sampling uniformly from it is degree-proportional
            let mut endpoints: Vec<u32> = Vec::new();
            for u in 0..=m as u32 {
                for v in 0..u {
                    edges.push((v, u));
                    endpoints.extend([u, v]);
                }
            }
            let cross_accept = (1.0 - HOMOPHILY) / HOMOPHILY;
            for u in (m + 1) as u32..n as u32 {
                let mut chosen: Vec<u32> = Vec::with_capacity(m);
                let mut attempts = 0usize;
                while chosen.len() < m {
                    let v = endpoints[edge_rng.random_range(0..endpoints.len())];
                    attempts += 1;
                    let same = labels[u as usize] == labels[v as usize];
                    let accept = same || attempts > 50 * m || edge_rng.random::<f64>() < cross_accept;
                    if accept && !chosen.contains(&v) {
                        chosen.push(v);
                    }
                }
                for v in chosen {
                    edges.push((v, u));
                    endpoints.extend([u, v]);
                }
            }
        }
    }

    let mut g = CsrGraph::from_edges(n, &edges, features, labels)?;
    g.num_classes = spec.classes;
    Ok(g)
}

/// Write `u v` lines, one per undirected edge.
pub fn write_edge_list<W: Write>(w: W, g: &CsrGraph) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    for (u, v) in g.undirected_edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()
}

/// Parse `u v` lines; blank lines and `#` comments are skipped.
pub fn read_edge_list<R: BufRead>(r: R) -> Result<Vec<(u32, u32)>, WorkloadError> {
    let mut edges = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u32, WorkloadError> {
            tok.ok_or_else(|| WorkloadError::Parse(format!("line {}: expected two node ids", i + 1)))?
                .parse::<u32>()
                .map_err(|e| WorkloadError::Parse(format!("line {}: {e}", i + 1)))
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        edges.push((u, v));
    }
    Ok(edges)
}

/// Sidecar layout: 8-byte magic, `rows: u32`, `cols: u32`, then `rows * cols`
/// little-endian f64 values in row-major order. The last column holds the
/// class label of each node.
pub fn write_features<W: Write>(w: W, g: &CsrGraph) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    let rows = g.node_count() as u32;
    let cols = g.feature_dim() as u32 + 1;
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for r in 0..g.node_count() {
        for v in g.features.row(r) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&f64::from(g.labels[r]).to_le_bytes())?;
    }
    w.flush()
}

pub fn read_features<R: Read>(mut r: R) -> Result<(Matrix, Vec<u32>), WorkloadError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..8] != FEATURE_MAGIC {
        return Err(WorkloadError::Parse("feature file has a bad magic".into()));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if cols < 2 {
        return Err(WorkloadError::Parse("feature file needs at least one feature column and a label".into()));
    }
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf)?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut feats = Vec::with_capacity(rows * (cols - 1));
    let mut labels = Vec::with_capacity(rows);
    for row in values.chunks_exact(cols) {
        feats.extend_from_slice(&row[..cols - 1]);
        let l = row[cols - 1];
        if !(l >= 0.0 && l.fract() == 0.0 && l <= f64::from(u32::MAX)) {
            return Err(WorkloadError::Parse(format!("invalid label {l}")));
        }
        labels.push(l as u32);
    }
    Ok((Matrix::from_vec(rows, cols - 1, feats), labels))
}

/// Load an edge list plus feature sidecar.
pub fn load_graph(edges: &Path, features: &Path) -> Result<CsrGraph, WorkloadError> {
    let edge_list = read_edge_list(io::BufReader::new(std::fs::File::open(edges)?))?;
    let (feats, labels) = read_features(io::BufReader::new(std::fs::File::open(features)?))?;
    CsrGraph::from_edges(feats.rows, &edge_list, feats, labels)
}
