//! Dense numerical kernels shared by every stage of the engine.
//!
//! Everything operates on row-major `f64` matrices. The kernels are plain
//! loops with a fixed accumulation order: for these shapes, deterministic
//! results matter more than peak throughput, and the row-major triple loop
//! vectorizes well enough.

pub mod flops;
mod rng;

pub use rng::{mix, Rng};

use crate::error::{Result, TcaError};

/// Row-major `f64` matrix. `data.len() == rows * cols` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TcaError::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TcaError::Shape("ragged row lengths".into()));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> DenseMatrix {
        assert!(start + width <= self.cols, "column block out of range");
        let mut out = DenseMatrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fill from a generator, row-major.
    pub fn fill_with(rows: usize, cols: usize, mut f: impl FnMut() -> f64) -> Self {
        let data = (0..rows * cols).map(|_| f()).collect();
        DenseMatrix { rows, cols, data }
    }
}

/// Standard matrix product with row-major accumulation: each output entry
/// sums over the inner index in ascending order, so repeated runs are
/// bit-identical.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(TcaError::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    flops::add((a.rows * a.cols * b.cols) as u64);
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = out.row_mut(i);
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = b.row(k);
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Add a row vector to every row in place (not counted as multiply-adds).
pub fn add_row_bias(x: &mut DenseMatrix, bias: &[f64]) -> Result<()> {
    if bias.len() != x.cols {
        return Err(TcaError::Shape(format!(
            "bias length {} for {} columns",
            bias.len(),
            x.cols
        )));
    }
    for r in 0..x.rows {
        for (v, b) in x.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(())
}

/// Pairwise squared L2 distances: entry (p, q) is sum_l (a[p,l] - b[q,l])^2.
///
/// Computed by direct subtraction rather than the expanded
/// |a|^2 + |b|^2 - 2ab form, so exact-match rows give exact zeros.
pub fn pairwise_sqdist(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(TcaError::Shape(format!(
            "pairwise_sqdist feature dims {} vs {}",
            a.cols, b.cols
        )));
    }
    flops::add((a.rows * b.rows * a.cols) as u64);
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    for p in 0..a.rows {
        let ap = a.row(p);
        let out_row = out.row_mut(p);
        for (q, o) in out_row.iter_mut().enumerate() {
            let bq = b.row(q);
            let mut acc = 0.0;
            for (&x, &y) in ap.iter().zip(bq) {
                let d = x - y;
                acc += d * d;
            }
            *o = acc;
        }
    }
    Ok(out)
}

/// Cosine distance matrix: entry (p, q) is 1 - cos(a_p, b_q). Zero rows are
/// treated as distance 1 from everything. Counted at the same multiply-add
/// volume as the squared-L2 kernel.
pub fn pairwise_cosine_dist(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(TcaError::Shape(format!(
            "pairwise_cosine_dist feature dims {} vs {}",
            a.cols, b.cols
        )));
    }
    flops::add((a.rows * b.rows * a.cols) as u64);
    let norm = |row: &[f64]| row.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a_norms: Vec<f64> = (0..a.rows).map(|p| norm(a.row(p))).collect();
    let b_norms: Vec<f64> = (0..b.rows).map(|q| norm(b.row(q))).collect();
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    for p in 0..a.rows {
        let ap = a.row(p);
        let out_row = out.row_mut(p);
        for (q, o) in out_row.iter_mut().enumerate() {
            let bq = b.row(q);
            let dot: f64 = ap.iter().zip(bq).map(|(&x, &y)| x * y).sum();
            let denom = a_norms[p] * b_norms[q];
            *o = if denom > 0.0 {
                1.0 - (dot / denom).clamp(-1.0, 1.0)
            } else {
                1.0
            };
        }
    }
    Ok(out)
}

/// Negated dot products, so argmin picks the largest dot product. Counted
/// at the same multiply-add volume as the squared-L2 kernel.
pub fn pairwise_neg_dot(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(TcaError::Shape(format!(
            "pairwise_neg_dot feature dims {} vs {}",
            a.cols, b.cols
        )));
    }
    flops::add((a.rows * b.rows * a.cols) as u64);
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    for p in 0..a.rows {
        let ap = a.row(p);
        let out_row = out.row_mut(p);
        for (q, o) in out_row.iter_mut().enumerate() {
            let dot: f64 = ap.iter().zip(b.row(q)).map(|(&x, &y)| x * y).sum();
            *o = -dot;
        }
    }
    Ok(out)
}

/// Per-row index of the minimum entry. Ties break to the lowest index.
pub fn argmin_row(d: &DenseMatrix) -> Result<Vec<usize>> {
    if d.rows == 0 || d.cols == 0 {
        return Err(TcaError::Shape(format!(
            "argmin over empty matrix {}x{}",
            d.rows, d.cols
        )));
    }
    let mut out = Vec::with_capacity(d.rows);
    for r in 0..d.rows {
        let row = d.row(r);
        let mut best = 0usize;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v < best_v {
                best = j;
                best_v = v;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Per-row index of the maximum entry. Ties break to the lowest index.
pub fn argmax_row(d: &DenseMatrix) -> Result<Vec<usize>> {
    if d.rows == 0 || d.cols == 0 {
        return Err(TcaError::Shape(format!(
            "argmax over empty matrix {}x{}",
            d.rows, d.cols
        )));
    }
    let mut out = Vec::with_capacity(d.rows);
    for r in 0..d.rows {
        let row = d.row(r);
        let mut best = 0usize;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Row-wise softmax, max-subtracted for stability.
pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    out
}

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Row layer normalization followed by a per-column affine. A constant row
/// normalizes to zero (the epsilon keeps the division finite).
pub fn layernorm(x: &DenseMatrix, gamma: &[f64], beta: &[f64]) -> Result<DenseMatrix> {
    if gamma.len() != x.cols || beta.len() != x.cols {
        return Err(TcaError::Shape(format!(
            "layernorm affine lengths {}, {} for {} columns",
            gamma.len(),
            beta.len(),
            x.cols
        )));
    }
    let mut out = x.clone();
    let n = x.cols as f64;
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
        for (v, (g, b)) in row.iter_mut().zip(gamma.iter().zip(beta)) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// GELU with the tanh approximation.
pub fn gelu(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for v in out.data.iter_mut() {
        *v = gelu_scalar(*v);
    }
    out
}

fn gelu_scalar(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}
