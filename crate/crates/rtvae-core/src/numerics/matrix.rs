//! Dense row-major `f64` matrices.
//!
//! All reductions run in a fixed left-to-right index order so that repeated
//! runs produce bit-identical results. Shapes are validated by callers (the
//! tape reports shape errors with node ids); the kernels here assert.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability floor applied before `log` and fractional `power` on the tape
/// and in the loss functions. Keeps values and gradients finite when a
/// predicted probability underflows.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch in {op} at node {node}: {detail}")]
    ShapeMismatch {
        op: &'static str,
        node: usize,
        detail: String,
    },
    #[error("non-finite output of {op} at node {node}")]
    NonFiniteNode { op: &'static str, node: usize },
    #[error("backward requires a 1x1 output node, got {rows}x{cols}")]
    OutputNotScalar { rows: usize, cols: usize },
}

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Checked constructor: rejects length mismatches and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericsError::NonFinite {
                    row: i / cols.max(1),
                    col: i % cols.max(1),
                });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self (m x k) * rhs (k x n)`; accumulation over `k` in increasing order.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimensions");
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let lhs_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in lhs_row.iter().enumerate() {
                let rhs_row = &rhs.data[kk * n..(kk + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Matrix::from_vec_unchecked(m, n, out)
    }

    /// `self (m x k) * rhs^T` where `rhs` is `n x k`.
    pub(crate) fn matmul_nt(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.cols, "matmul_nt inner dimensions");
        let (m, k, n) = (self.rows, self.cols, rhs.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let lhs_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let rhs_row = &rhs.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (a, b) in lhs_row.iter().zip(rhs_row) {
                    acc += a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Matrix::from_vec_unchecked(m, n, out)
    }

    /// `self^T * rhs` where `self` is `m x k` and `rhs` is `m x n`.
    pub(crate) fn matmul_tn(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "matmul_tn inner dimensions");
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; k * n];
        for i in 0..m {
            let lhs_row = &self.data[i * k..(i + 1) * k];
            let rhs_row = &rhs.data[i * n..(i + 1) * n];
            for (j, &a) in lhs_row.iter().enumerate() {
                let out_row = &mut out[j * n..(j + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Matrix::from_vec_unchecked(k, n, out)
    }

    /// Adds a `1 x n` bias row to every row of an `m x n` matrix.
    pub fn add_row_broadcast(&self, bias: &Matrix) -> Matrix {
        assert_eq!(bias.rows, 1, "bias must be a single row");
        assert_eq!(self.cols, bias.cols, "bias width");
        let mut out = self.data.clone();
        for row in out.chunks_mut(self.cols) {
            for (o, &b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Matrix::from_vec_unchecked(self.rows, self.cols, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "zip_map shapes");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::from_vec_unchecked(self.rows, self.cols, data)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        self.map(|v| v * factor)
    }

    /// Row-wise softmax with max-subtraction; each output row sums to one.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            out.extend(exps.iter().map(|&e| e / sum));
        }
        Matrix::from_vec_unchecked(self.rows, self.cols, out)
    }

    /// Sum of all entries in row-major order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Per-row sums as an `m x 1` column.
    pub fn sum_rows(&self) -> Matrix {
        let data = self
            .data
            .chunks(self.cols)
            .map(|r| r.iter().sum())
            .collect();
        Matrix::from_vec_unchecked(self.rows, 1, data)
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn slice_cols(&self, offset: usize, width: usize) -> Matrix {
        assert!(offset + width <= self.cols, "column slice out of range");
        let mut out = Vec::with_capacity(self.rows * width);
        for row in self.data.chunks(self.cols) {
            out.extend_from_slice(&row[offset..offset + width]);
        }
        Matrix::from_vec_unchecked(self.rows, width, out)
    }

    pub fn concat_cols(&self, right: &Matrix) -> Matrix {
        assert_eq!(self.rows, right.rows, "concat row counts");
        let cols = self.cols + right.cols;
        let mut out = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            out.extend_from_slice(self.row(i));
            out.extend_from_slice(right.row(i));
        }
        Matrix::from_vec_unchecked(self.rows, cols, out)
    }
}
