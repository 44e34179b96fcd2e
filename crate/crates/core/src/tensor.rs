//! Dense 2-D tensors and the handful of kernels the modulation math needs:
//! `Q·Kᵀ`, row softmax, and per-row reductions. Values are stored as `f32`;
//! dot products and softmax sums accumulate in `f64`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {context} ({left} vs {right})")]
    ShapeMismatch {
        context: &'static str,
        left: String,
        right: String,
    },
    #[error("dimension out of range: {rows}x{cols} with {len} values")]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("reduction over an empty row dimension")]
    EmptyReduction,
}

/// Row-major dense matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// Copy of the row block `[start, end)`.
    pub fn row_block(&self, start: usize, end: usize) -> Tensor2 {
        assert!(start <= end && end <= self.rows, "row block out of range");
        Tensor2 {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Max,
    Min,
    Mean,
}

/// `Q·Kᵀ` for row-major `Q` (N×d) and `K` (M×d). Each dot product
/// accumulates in `f64` and is rounded once to `f32`.
pub fn matmul_qk(q: &Tensor2, k: &Tensor2) -> Result<Tensor2, TensorError> {
    if q.cols != k.cols {
        return Err(TensorError::ShapeMismatch {
            context: "matmul_qk inner dimension",
            left: format!("{}x{}", q.rows, q.cols),
            right: format!("{}x{}", k.rows, k.cols),
        });
    }
    let mut out = Tensor2::zeros(q.rows, k.rows);
    for (x, q_row) in q.iter_rows().enumerate() {
        let out_row = out.row_mut(x);
        for (y, k_row) in k.iter_rows().enumerate() {
            let mut acc = 0.0f64;
            for (a, b) in q_row.iter().zip(k_row) {
                acc += f64::from(*a) * f64::from(*b);
            }
            out_row[y] = acc as f32;
        }
    }
    Ok(out)
}

/// Numerically stable softmax of one row: subtract the row max, exponentiate
/// and normalize with an `f64` running sum.
pub fn softmax_row(src: &[f32], dst: &mut [f32]) {
    debug_assert_eq!(src.len(), dst.len());
    let max = src.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for (d, &s) in dst.iter_mut().zip(src) {
        let e = f64::from(s - max).exp();
        *d = e as f32;
        sum += e;
    }
    let inv = 1.0 / sum;
    for d in dst.iter_mut() {
        *d = (f64::from(*d) * inv) as f32;
    }
}

/// Row-wise softmax; every output row sums to 1 within 1e-6.
pub fn row_softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let src = logits.row(r);
        softmax_row(src, out.row_mut(r));
    }
    out
}

pub fn reduce_row(row: &[f32], kind: Reduce) -> f32 {
    match kind {
        Reduce::Max => row.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        Reduce::Min => row.iter().copied().fold(f32::INFINITY, f32::min),
        Reduce::Mean => {
            let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
            (sum / row.len() as f64) as f32
        }
    }
}

/// Per-row reduction over all columns; one value per row.
pub fn row_reduce(t: &Tensor2, kind: Reduce) -> Result<Vec<f32>, TensorError> {
    if t.cols == 0 {
        return Err(TensorError::EmptyReduction);
    }
    Ok(t.iter_rows().map(|row| reduce_row(row, kind)).collect())
}
