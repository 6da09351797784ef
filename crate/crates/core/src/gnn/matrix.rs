//! Row-major dense matrix used by the GNN layers.
//!
//! Every parallel kernel here computes each output element on a single task
//! with a fixed summation order, so results are bitwise identical for any
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rows per rayon task; tiny matrices stay on the calling thread.
const MIN_ROWS_PER_TASK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self * rhs + bias` (bias broadcast over rows).
    pub fn matmul_bias(&self, rhs: &Matrix, bias: &[f64]) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        assert_eq!(bias.len(), rhs.cols, "bias length");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        let k = self.cols;
        let n = rhs.cols;
        if n == 0 {
            return out;
        }
        out.data
            .par_chunks_mut(n)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(r, orow)| {
                orow.copy_from_slice(bias);
                let arow = &self.data[r * k..(r + 1) * k];
                for (i, &a) in arow.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let wrow = &rhs.data[i * n..(i + 1) * n];
                    for (o, &w) in orow.iter_mut().zip(wrow) {
                        *o += a * w;
                    }
                }
            });
        out
    }

    /// `self * rhs^T`.
    pub fn matmul_transposed(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.cols, "matmul_transposed inner dimension");
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        let k = self.cols;
        let n = rhs.rows;
        if n == 0 {
            return out;
        }
        out.data
            .par_chunks_mut(n)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(r, orow)| {
                let arow = &self.data[r * k..(r + 1) * k];
                for (j, o) in orow.iter_mut().enumerate() {
                    let brow = &rhs.data[j * k..(j + 1) * k];
                    *o = arow.iter().zip(brow).map(|(a, b)| a * b).sum();
                }
            });
        out
    }

    /// `self^T * rhs`, the weight-gradient product. Each output row is
    /// accumulated over input rows in ascending order.
    pub fn transposed_matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "transposed_matmul row count");
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        let n = rhs.cols;
        if n == 0 {
            return out;
        }
        out.data
            .par_chunks_mut(n)
            .with_min_len(4)
            .enumerate()
            .for_each(|(i, orow)| {
                for r in 0..self.rows {
                    let a = self.data[r * self.cols + i];
                    if a == 0.0 {
                        continue;
                    }
                    let brow = &rhs.data[r * n..(r + 1) * n];
                    for (o, &b) in orow.iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            });
        out
    }

    /// Column sums in ascending row order.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
