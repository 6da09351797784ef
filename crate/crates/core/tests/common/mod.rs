//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use autotune::gnn::{
    forward_backward, generate_graph, CsrGraph, GeneratorSpec, GraphKind, Matrix, ModelKind, ModelParams, SampledSubgraph,
};

/// Dense symmetric adjacency built straight from the undirected edge list.
pub fn dense_adjacency(g: &CsrGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (u, v) in g.undirected_edges() {
        a[u as usize][v as usize] = 1.0;
        a[v as usize][u as usize] = 1.0;
    }
    a
}

fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| (0..k).map(|i| row[i] * b[i][j]).sum())
                .collect()
        })
        .collect()
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

/// Full-graph forward pass with dense matrices: `D^-1/2 A D^-1/2` for GCN,
/// `[H, D^-1 A H]` for GraphSAGE. Returns one output row per node.
pub fn dense_forward(g: &CsrGraph, params: &ModelParams) -> Vec<Vec<f64>> {
    let a = dense_adjacency(g);
    let n = a.len();
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let norm = |d: f64| if d == 0.0 { 1.0 } else { d };
    let op: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match params.kind {
                    ModelKind::Gcn => a[i][j] / (norm(deg[i]) * norm(deg[j])).sqrt(),
                    ModelKind::Sage => {
                        if deg[i] == 0.0 {
                            0.0
                        } else {
                            a[i][j] / deg[i]
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut h = to_rows(&g.features);
    let layers = params.layers.len();
    for (l, layer) in params.layers.iter().enumerate() {
        let agg = dense_mul(&op, &h);
        let input: Vec<Vec<f64>> = match params.kind {
            ModelKind::Gcn => agg,
            ModelKind::Sage => h.iter().zip(&agg).map(|(x, m)| [x.clone(), m.clone()].concat()).collect(),
        };
        let mut z = dense_mul(&input, &to_rows(&layer.weight));
        for row in &mut z {
            for (v, b) in row.iter_mut().zip(&layer.bias) {
                *v += b;
                if l + 1 < layers {
                    *v = v.max(0.0);
                }
            }
        }
        h = z;
    }
    h
}

pub fn random_graph(nodes: usize, p: f64, feature_dim: usize, classes: usize, seed: u64) -> CsrGraph {
    generate_graph(&GeneratorSpec {
        kind: GraphKind::ErdosRenyi,
        nodes,
        param: p,
        feature_dim,
        classes,
        seed,
    })
    .unwrap()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn loss_of(sub: &SampledSubgraph, p: &ModelParams, feats: &Matrix, labels: &[u32]) -> f64 {
    forward_backward(sub, p, feats, labels).unwrap().loss
}

/// Largest relative error between backprop and central differences
/// (step 1e-5) over every parameter of a two-layer model.
pub fn worst_gradient_error(kind: ModelKind, sub: &SampledSubgraph, feats: &Matrix, labels: &[u32], seed: u64) -> f64 {
    let mut p = ModelParams::init(kind, &[feats.cols, 5, 3], seed).unwrap();
    for l in &mut p.layers {
        for (i, b) in l.bias.iter_mut().enumerate() {
            *b = 0.07 * (i as f64 + 1.0);
        }
    }
    let analytic = forward_backward(sub, &p, feats, labels).unwrap().grads.to_tensors();
    let base = p.to_tensors();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (ti, tensor) in base.iter().enumerate() {
        for k in 0..tensor.len() {
            let mut plus = base.clone();
            plus[ti][k] += eps;
            let mut minus = base.clone();
            minus[ti][k] -= eps;
            let mut pp = p.clone();
            pp.load_tensors(&plus).unwrap();
            let mut pm = p.clone();
            pm.load_tensors(&minus).unwrap();
            let fd = (loss_of(sub, &pp, feats, labels) - loss_of(sub, &pm, feats, labels)) / (2.0 * eps);
            worst = worst.max(rel_err(fd, analytic[ti][k], 1e-6));
        }
    }
    worst
}
