//! GCN and GraphSAGE layers, softmax cross-entropy, and reverse-mode
//! gradients.
//!
//! GCN aggregates `sum_u h_u / sqrt(D(v) D(u))` with full-graph degrees (a
//! zero degree counts as 1) and no self loop. GraphSAGE concatenates `h_v`
//! with the mean of its sampled neighbours (zero when there are none). Both
//! apply `aW + b` followed by ReLU on every layer but the last.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::sampler::{Block, SampledSubgraph};
use super::WorkloadError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Sage,
}

impl std::str::FromStr for ModelKind {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "sage" => Ok(Self::Sage),
            _ => Err(WorkloadError::Config(format!("unknown model {s:?} (expected gcn or sage)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases. `dims` is `[f0, f1, ..., fL]`.
    pub fn init(kind: ModelKind, dims: &[usize], seed: u64) -> Result<Self, WorkloadError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(WorkloadError::Config(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = rng::keyed(&[seed, 0x9A]);
        let layers = dims
            .windows(2)
            .map(|w| {
                let fan_in = match kind {
                    ModelKind::Gcn => w[0],
                    ModelKind::Sage => 2 * w[0],
                };
                let limit = (6.0 / (fan_in + w[1]) as f64).sqrt();
                Layer {
                    weight: Matrix::from_fn(fan_in, w[1], |_, _| rng.random_range(-limit..limit)),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Self { kind, layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows, l.weight.cols),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            ModelKind::Gcn => self.layers[0].weight.rows,
            ModelKind::Sage => self.layers[0].weight.rows / 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    /// Flatten to `[W1, b1, W2, b2, ...]`.
    pub fn to_tensors(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data.clone(), l.bias.clone()])
            .collect()
    }

    /// Overwrite values from tensors laid out as in [`Self::to_tensors`].
    pub fn load_tensors(&mut self, tensors: &[Vec<f64>]) -> Result<(), WorkloadError> {
        if tensors.len() != 2 * self.layers.len() {
            return Err(WorkloadError::Shape(format!(
                "expected {} tensors, got {}",
                2 * self.layers.len(),
                tensors.len()
            )));
        }
        for (l, pair) in self.layers.iter_mut().zip(tensors.chunks(2)) {
            if pair[0].len() != l.weight.data.len() || pair[1].len() != l.bias.len() {
                return Err(WorkloadError::Shape("tensor length mismatch".into()));
            }
            l.weight.data.copy_from_slice(&pair[0]);
            l.bias.copy_from_slice(&pair[1]);
        }
        Ok(())
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &ModelParams, lr: f64) {
        for (p, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, d) in p.weight.data.iter_mut().zip(&g.weight.data) {
                *w -= lr * d;
            }
            for (b, d) in p.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

#[inline]
fn gcn_norm(d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        d as f64
    }
}

/// GCN aggregation for the block's destination nodes.
pub fn aggregate_gcn(block: &Block, degrees: &[usize], h: &Matrix) -> Matrix {
    let f = h.cols;
    let mut out = Matrix::zeros(block.dst_count, f);
    if f == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(f)
        .with_min_len(16)
        .enumerate()
        .for_each(|(v, row)| {
            let dv = gcn_norm(degrees[v]);
            for &u in block.sources_of(v) {
                let w = 1.0 / (dv * gcn_norm(degrees[u as usize])).sqrt();
                for (o, x) in row.iter_mut().zip(h.row(u as usize)) {
                    *o += w * x;
                }
            }
        });
    out
}

/// GraphSAGE aggregation: `[h_v, mean_u h_u]`.
pub fn aggregate_sage(block: &Block, h: &Matrix) -> Matrix {
    let f = h.cols;
    let mut out = Matrix::zeros(block.dst_count, 2 * f);
    if f == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(2 * f)
        .with_min_len(16)
        .enumerate()
        .for_each(|(v, row)| {
            let (own, mean) = row.split_at_mut(f);
            own.copy_from_slice(h.row(v));
            let srcs = block.sources_of(v);
            if srcs.is_empty() {
                return;
            }
            for &u in srcs {
                for (o, x) in mean.iter_mut().zip(h.row(u as usize)) {
                    *o += x;
                }
            }
            let inv = 1.0 / srcs.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
        });
    out
}

fn relu_in_place(m: &mut Matrix) {
    m.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// One GCN layer: aggregation, affine update, ReLU unless `last`.
pub fn gcn_layer_forward(block: &Block, degrees: &[usize], h: &Matrix, layer: &Layer, last: bool) -> Matrix {
    let mut z = aggregate_gcn(block, degrees, h).matmul_bias(&layer.weight, &layer.bias);
    if !last {
        relu_in_place(&mut z);
    }
    z
}

/// One GraphSAGE layer: aggregation, affine update, ReLU unless `last`.
pub fn sage_layer_forward(block: &Block, h: &Matrix, layer: &Layer, last: bool) -> Matrix {
    let mut z = aggregate_sage(block, h).matmul_bias(&layer.weight, &layer.bias);
    if !last {
        relu_in_place(&mut z);
    }
    z
}

/// Input features for every local node of the subgraph.
pub fn gather_features(sub: &SampledSubgraph, features: &Matrix) -> Matrix {
    let f = features.cols;
    let mut data = Vec::with_capacity(sub.layer_sizes[0] * f);
    for &g in &sub.node_ids[..sub.layer_sizes[0]] {
        data.extend_from_slice(features.row(g as usize));
    }
    Matrix::from_vec(sub.layer_sizes[0], f, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Mean cross-entropy over the targets.
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
    pub grads: ModelParams,
}

/// Logits for each entry of `sub.targets`.
pub fn forward(sub: &SampledSubgraph, params: &ModelParams, features: &Matrix) -> Result<Matrix, WorkloadError> {
    let (_, _, logits) = forward_cached(sub, params, features)?;
    let c = logits.cols;
    let mut out = Matrix::zeros(sub.targets.len(), c);
    for (i, &t) in sub.targets.iter().enumerate() {
        out.row_mut(i).copy_from_slice(logits.row(t as usize));
    }
    Ok(out)
}

/// Aggregations and pre-activations of every layer, plus the final output.
fn forward_cached(
    sub: &SampledSubgraph,
    params: &ModelParams,
    features: &Matrix,
) -> Result<(Vec<Matrix>, Vec<Matrix>, Matrix), WorkloadError> {
    if sub.num_layers() != params.num_layers() {
        return Err(WorkloadError::Shape(format!(
            "subgraph has {} layers, model has {}",
            sub.num_layers(),
            params.num_layers()
        )));
    }
    if features.cols != params.input_dim() {
        return Err(WorkloadError::Shape(format!(
            "feature dim {} != model input dim {}",
            features.cols,
            params.input_dim()
        )));
    }
    let layers = params.num_layers();
    let mut h = gather_features(sub, features);
    let mut aggs = Vec::with_capacity(layers);
    let mut pre = Vec::with_capacity(layers);
    for (l, (block, layer)) in sub.blocks.iter().zip(&params.layers).enumerate() {
        let a = match params.kind {
            ModelKind::Gcn => aggregate_gcn(block, &sub.degrees, &h),
            ModelKind::Sage => aggregate_sage(block, &h),
        };
        let z = a.matmul_bias(&layer.weight, &layer.bias);
        if !z.is_finite() {
            return Err(WorkloadError::Numerical { layer: l + 1 });
        }
        let mut next = z.clone();
        if l + 1 < layers {
            relu_in_place(&mut next);
        }
        aggs.push(a);
        pre.push(z);
        h = next;
    }
    Ok((aggs, pre, h))
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy over `sub.targets` and its exact gradient with
/// respect to every weight and bias. `labels` is indexed by global node id.
pub fn forward_backward(
    sub: &SampledSubgraph,
    params: &ModelParams,
    features: &Matrix,
    labels: &[u32],
) -> Result<StepOutput, WorkloadError> {
    let (aggs, pre, logits) = forward_cached(sub, params, features)?;
    let layers = params.num_layers();
    let classes = logits.cols;
    let count = sub.targets.len();
    if count == 0 {
        return Err(WorkloadError::Config("no targets".into()));
    }
    let inv = 1.0 / count as f64;

    // d loss / d output over the output-layer nodes; duplicate targets add up
    let mut grad_h = Matrix::zeros(logits.rows, classes);
    let mut loss = 0.0;
    let mut correct = 0;
    for &t in &sub.targets {
        let t = t as usize;
        let y = labels[sub.node_ids[t] as usize] as usize;
        if y >= classes {
            return Err(WorkloadError::Shape(format!("label {y} >= class count {classes}")));
        }
        let logp = log_softmax_row(logits.row(t));
        loss -= logp[y];
        if argmax(logits.row(t)) == y {
            correct += 1;
        }
        let g = grad_h.row_mut(t);
        for (c, (gc, lp)) in g.iter_mut().zip(&logp).enumerate() {
            *gc += (lp.exp() - if c == y { 1.0 } else { 0.0 }) * inv;
        }
    }
    loss *= inv;
    if !loss.is_finite() {
        return Err(WorkloadError::Numerical { layer: layers });
    }

    let mut grads = params.zeros_like();
    for l in (0..layers).rev() {
        // grad_h is d/d(output of layer l); apply the ReLU mask for hidden layers
        let mut dz = grad_h;
        if l + 1 < layers {
            for (d, z) in dz.data.iter_mut().zip(&pre[l].data) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        grads.layers[l].weight = aggs[l].transposed_matmul(&dz);
        grads.layers[l].bias = dz.column_sums();
        if l == 0 {
            break;
        }
        let da = dz.matmul_transposed(&params.layers[l].weight);
        let block = &sub.blocks[l];
        let f = da.cols / if params.kind == ModelKind::Sage { 2 } else { 1 };
        let mut dh = Matrix::zeros(block.src_count, f);
        match params.kind {
            ModelKind::Gcn => {
                for v in 0..block.dst_count {
                    let dv = gcn_norm(sub.degrees[v]);
                    for &u in block.sources_of(v) {
                        let w = 1.0 / (dv * gcn_norm(sub.degrees[u as usize])).sqrt();
                        let (src, dst) = (da.row(v), u as usize);
                        for (o, x) in dh.row_mut(dst).iter_mut().zip(src) {
                            *o += w * x;
                        }
                    }
                }
            }
            ModelKind::Sage => {
                for v in 0..block.dst_count {
                    let row = da.row(v);
                    for (o, x) in dh.row_mut(v).iter_mut().zip(&row[..f]) {
                        *o += x;
                    }
                    let srcs = block.sources_of(v);
                    if srcs.is_empty() {
                        continue;
                    }
                    let w = 1.0 / srcs.len() as f64;
                    for &u in srcs {
                        for (o, x) in dh.row_mut(u as usize).iter_mut().zip(&row[f..]) {
                            *o += w * x;
                        }
                    }
                }
            }
        }
        grad_h = dh;
    }
    Ok(StepOutput {
        loss,
        correct,
        count,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::graph::CsrGraph;
    use crate::gnn::sampler::{neighbor_sample, shadow_sample};

    fn path_graph() -> CsrGraph {
        CsrGraph::from_edges(4, &[(0, 1), (0, 2), (2, 3)], Matrix::zeros(4, 1), vec![0; 4]).unwrap()
    }

    #[test]
    fn gcn_path_example() {
        let g = path_graph();
        let sub = neighbor_sample(&g, &[0], &[usize::MAX], 0).unwrap();
        let mut h = Matrix::zeros(sub.layer_sizes[0], 1);
        for (i, &v) in sub.node_ids.iter().enumerate() {
            h.data[i] = [0.0, 1.0, 2.0, 0.0][v as usize];
        }
        let a = aggregate_gcn(&sub.blocks[0], &sub.degrees, &h);
        assert!((a.data[0] - (1.0 / 2f64.sqrt() + 1.0)).abs() < 1e-12);
        assert!((a.data[0] - 1.7071).abs() < 1e-4);
    }

    #[test]
    fn zero_features_give_relu_bias() {
        let g = path_graph();
        let sub = neighbor_sample(&g, &[0, 3], &[usize::MAX], 0).unwrap();
        let h = Matrix::zeros(sub.layer_sizes[0], 2);
        let layer = Layer {
            weight: Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]),
            bias: vec![0.5, -0.5],
        };
        let out = gcn_layer_forward(&sub.blocks[0], &sub.degrees, &h, &layer, false);
        for r in 0..out.rows {
            assert_eq!(out.row(r), &[0.5, 0.0]);
        }
    }

    #[test]
    fn sage_mean_and_empty_neighborhood() {
        let g = CsrGraph::from_edges(4, &[(0, 1), (0, 2)], Matrix::zeros(4, 1), vec![0; 4]).unwrap();
        let sub = neighbor_sample(&g, &[0, 3], &[usize::MAX], 0).unwrap();
        let mut h = Matrix::zeros(sub.layer_sizes[0], 1);
        for (i, &v) in sub.node_ids.iter().enumerate() {
            h.data[i] = [5.0, 1.0, 3.0, 7.0][v as usize];
        }
        let a = aggregate_sage(&sub.blocks[0], &h);
        assert_eq!(a.row(0), &[5.0, 2.0]);
        assert_eq!(a.row(1), &[7.0, 0.0]);
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let g = path_graph();
        let mut p = ModelParams::init(ModelKind::Sage, &[1, 3, 5], 0).unwrap();
        for l in &mut p.layers {
            l.weight.data.iter_mut().for_each(|w| *w = 0.0);
        }
        let feats = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let sub = neighbor_sample(&g, &[0, 1, 2], &[2, 2], 0).unwrap();
        let out = forward_backward(&sub, &p, &feats, &[0, 1, 4, 2]).unwrap();
        assert!((out.loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_targets_are_mean_invariant() {
        let g = path_graph();
        let p = ModelParams::init(ModelKind::Gcn, &[2, 4, 3], 1).unwrap();
        let feats = Matrix::from_fn(4, 2, |r, c| (r as f64 - c as f64 * 0.5).sin());
        let labels = [0, 2, 1, 1];
        let once = forward_backward(&neighbor_sample(&g, &[0, 2], &[3, 3], 4).unwrap(), &p, &feats, &labels).unwrap();
        let twice =
            forward_backward(&neighbor_sample(&g, &[0, 2, 0, 2], &[3, 3], 4).unwrap(), &p, &feats, &labels).unwrap();
        assert!((once.loss - twice.loss).abs() < 1e-14);
        for (a, b) in once.grads.to_tensors().concat().iter().zip(twice.grads.to_tensors().concat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_errors() {
        let g = path_graph();
        let p = ModelParams::init(ModelKind::Gcn, &[2, 3], 0).unwrap();
        let sub = neighbor_sample(&g, &[0], &[1, 1], 0).unwrap();
        assert!(forward_backward(&sub, &p, &Matrix::zeros(4, 2), &[0; 4]).is_err());
        let sub = shadow_sample(&g, &[0], &[1], 1, 0).unwrap();
        assert!(forward_backward(&sub, &p, &Matrix::zeros(4, 5), &[0; 4]).is_err());
        assert!(ModelParams::init(ModelKind::Gcn, &[3], 0).is_err());
    }

    #[test]
    fn overflow_reports_layer() {
        let g = path_graph();
        let mut p = ModelParams::init(ModelKind::Sage, &[1, 2, 2], 0).unwrap();
        p.layers[0].weight.data.iter_mut().for_each(|w| *w = f64::MAX);
        let feats = Matrix::from_vec(4, 1, vec![10.0; 4]);
        let sub = neighbor_sample(&g, &[0], &[2, 2], 0).unwrap();
        match forward_backward(&sub, &p, &feats, &[0; 4]) {
            Err(WorkloadError::Numerical { layer }) => assert_eq!(layer, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tensor_round_trip_and_sgd() {
        let p = ModelParams::init(ModelKind::Sage, &[3, 4, 2], 5).unwrap();
        let mut q = p.zeros_like();
        q.load_tensors(&p.to_tensors()).unwrap();
        assert_eq!(p, q);
        assert!(q.load_tensors(&p.to_tensors()[1..]).is_err());
        q.sgd_step(&p, 1.0);
        assert!(q.to_tensors().concat().iter().all(|&v| v == 0.0));
        assert_eq!(p.input_dim(), 3);
        assert_eq!(p.output_dim(), 2);
    }
}
