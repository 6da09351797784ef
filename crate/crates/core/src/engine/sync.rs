//! Gradient averaging across workers.

use super::EngineError;

/// Weighted sum `sum_i weights[i] * grads[i]`, added as a pairwise tree in
/// worker order so the result does not depend on arrival order.
pub fn weighted_average(grads: &[Vec<Vec<f64>>], weights: &[f64]) -> Result<Vec<Vec<f64>>, EngineError> {
    if grads.is_empty() {
        return Err(EngineError::ShapeMismatch("no gradient sets".into()));
    }
    if grads.len() != weights.len() {
        return Err(EngineError::ShapeMismatch(format!(
            "{} gradient sets but {} weights",
            grads.len(),
            weights.len()
        )));
    }
    let shape: Vec<usize> = grads[0].iter().map(Vec::len).collect();
    for (i, g) in grads.iter().enumerate() {
        if g.iter().map(Vec::len).ne(shape.iter().copied()) {
            return Err(EngineError::ShapeMismatch(format!("worker {i} gradient shape differs from worker 0")));
        }
    }
    let scaled: Vec<Vec<Vec<f64>>> = grads
        .iter()
        .zip(weights)
        .map(|(g, &w)| g.iter().map(|t| t.iter().map(|v| v * w).collect()).collect())
        .collect();
    Ok(tree_sum(scaled))
}

fn tree_sum(mut items: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (ta, tb) in a.iter_mut().zip(&b) {
                    for (x, y) in ta.iter_mut().zip(tb) {
                        *x += y;
                    }
                }
            }
            next.push(a);
        }
        items = next;
    }
    items.pop().unwrap_or_default()
}

/// Element-wise arithmetic mean with equal weights.
pub fn sync_gradients(grads: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>, EngineError> {
    let w = 1.0 / grads.len().max(1) as f64;
    weighted_average(grads, &vec![w; grads.len()])
}
