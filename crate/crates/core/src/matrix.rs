//! Dense row-major matrices and the handful of norms and activations the
//! rest of the workspace is built on.
//!
//! Everything is `f64`; there is no mixed precision anywhere because the
//! bound evaluators and finite-difference checks need ~1e-8 headroom.
//! All operations are pure functions of their inputs.

use crate::error::{Error, Result};

/// Row-major dense matrix.
///
/// Invariants: `data.len() == rows * cols` and every entry is finite.
/// Constructors enforce both; arithmetic on finite inputs keeps them.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Orientation convention for the (2,1) group norm.
///
/// The canonical convention here is `Rows` (sum of row Euclidean norms);
/// the column variant is exposed so bound comparisons can evaluate both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupNormOrientation {
    Rows,
    Columns,
}

/// Spectral, Frobenius and (2,1) norms of one matrix.
///
/// With the row-wise (2,1) convention, `spectral <= frobenius <= two_one`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub spectral: f64,
    pub frobenius: f64,
    pub two_one: f64,
}

impl DenseMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("matrix entries must be finite"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::validation("ragged rows"));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        DenseMatrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
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

    pub fn scale(&self, c: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(
        &self,
        other: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension {
                op,
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension {
                op: "axpy",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum of squares of all entries.
    pub fn sq_sum(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Elementwise max(0, x). Idempotent.
    pub fn relu(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        }
    }
}

/// Row-major product with deterministic, left-to-right summation over the
/// inner index for every output entry.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        // k outer / j inner accumulates each out[i][j] in ascending-k order.
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a * b^T` without materializing the transpose.
pub fn matmul_bt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::Dimension {
            op: "matmul_bt",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            let mut s = 0.0;
            for k in 0..a.cols {
                s += a.data[i * a.cols + k] * b.data[j * b.cols + k];
            }
            out.data[i * b.rows + j] = s;
        }
    }
    Ok(out)
}

/// `a^T * b` without materializing the transpose.
pub fn matmul_at(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::Dimension {
            op: "matmul_at",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = DenseMatrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = &a.data[k * a.cols..(k + 1) * a.cols];
        let brow = &b.data[k * b.cols..(k + 1) * b.cols];
        for (i, &aki) in arow.iter().enumerate() {
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// Largest singular value by power iteration on `M^T M`.
///
/// The start vector is the normalized all-ones vector so results are
/// reproducible. If the iteration stagnates at zero on a nonzero matrix
/// (start vector in the null space), the first coordinate is perturbed by
/// +1e-6 once and the iteration restarts.
pub fn spectral_norm(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::validation("spectral_norm: empty matrix"));
    }
    if tol <= 0.0 {
        return Err(Error::validation("spectral_norm: tol must be positive"));
    }
    if m.data.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }

    let n = m.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda_old = 0.0f64;
    let mut perturbed = false;
    let mut last_gap = f64::INFINITY;

    let apply = |v: &[f64]| -> Vec<f64> {
        // w = M^T (M v)
        let mut mv = vec![0.0; m.rows()];
        for i in 0..m.rows() {
            let row = m.row(i);
            let mut s = 0.0;
            for (a, b) in row.iter().zip(v) {
                s += a * b;
            }
            mv[i] = s;
        }
        let mut w = vec![0.0; n];
        for i in 0..m.rows() {
            let row = m.row(i);
            for (wj, a) in w.iter_mut().zip(row) {
                *wj += a * mv[i];
            }
        }
        w
    };

    for _ in 0..max_iter {
        let w = apply(&v);
        let lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lambda == 0.0 {
            if perturbed {
                return Ok(0.0);
            }
            // Start vector sits in the null space; nudge it off.
            perturbed = true;
            v[0] += 1e-6;
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            lambda_old = 0.0;
            continue;
        }
        v = w.iter().map(|x| x / lambda).collect();
        last_gap = (lambda - lambda_old).abs() / lambda;
        if last_gap <= tol {
            return Ok(lambda.sqrt());
        }
        lambda_old = lambda;
    }
    Err(Error::NonConvergence {
        what: "spectral_norm power iteration",
        iterations: max_iter,
        last_gap,
    })
}

/// (2,1) norm: sum over groups of the group Euclidean norm.
pub fn norm_21_with(m: &DenseMatrix, orientation: GroupNormOrientation) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::validation("norm_21: empty matrix"));
    }
    let total = match orientation {
        GroupNormOrientation::Rows => (0..m.rows())
            .map(|r| m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum(),
        GroupNormOrientation::Columns => (0..m.cols())
            .map(|c| {
                (0..m.rows())
                    .map(|r| {
                        let v = m.get(r, c);
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .sum(),
    };
    Ok(total)
}

/// (2,1) norm in the canonical row convention.
pub fn norm_21(m: &DenseMatrix) -> Result<f64> {
    norm_21_with(m, GroupNormOrientation::Rows)
}

/// All three norms of one matrix (row (2,1) convention).
pub fn norm_report(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<NormReport> {
    Ok(NormReport {
        spectral: spectral_norm(m, tol, max_iter)?,
        frobenius: m.frobenius_norm(),
        two_one: norm_21(m)?,
    })
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(m: &DenseMatrix) -> Result<DenseMatrix> {
    if m.is_empty() {
        return Err(Error::validation("softmax_rows: empty matrix"));
    }
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = out.row_mut(r);
        let mut sum = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    Ok(out)
}
