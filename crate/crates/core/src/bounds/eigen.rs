//! Symmetric eigendecomposition (cyclic Jacobi) and the PSD pseudo-inverse
//! built on it. Small dense matrices only.

use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_bt, DenseMatrix};

/// Eigenvalues (descending) and matching eigenvector columns of a
/// symmetric matrix. The input is symmetrized first.
pub fn sym_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows() != a.cols() {
        return Err(Error::validation("eigendecomposition needs a square matrix"));
    }
    let n = a.rows();
    let mut m = symmetrize(a);
    let mut v = DenseMatrix::identity(n);
    let scale = m.max_abs().max(1.0);

    for _ in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m.get(p, q).abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m.get(i, i), i)).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &(_, src)) in pairs.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, col, v.get(r, src));
        }
    }
    Ok((values, vectors))
}

pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(sym_eigen(a)?.0)
}

pub fn symmetrize(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, 0.5 * (a.get(r, c) + a.get(c, r)));
        }
    }
    out
}

/// Moore-Penrose inverse of a symmetric PSD matrix via its eigensystem.
/// Eigenvalues at or below `rel_cutoff * lambda_max` are dropped.
pub fn pinv_psd(a: &DenseMatrix, rel_cutoff: f64) -> Result<DenseMatrix> {
    let (values, vectors) = sym_eigen(a)?;
    let lmax = values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rel_cutoff * lmax;
    let n = a.rows();
    let mut scaled = vectors.clone();
    for c in 0..n {
        let inv = if values[c] > cutoff { 1.0 / values[c] } else { 0.0 };
        for r in 0..n {
            let v = scaled.get(r, c) * inv;
            scaled.set(r, c, v);
        }
    }
    matmul_bt(&scaled, &vectors)
}

/// tr(AB) for square matrices of matching size.
pub fn trace_product(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let prod = matmul(a, b)?;
    Ok((0..prod.rows()).map(|i| prod.get(i, i)).sum())
}
