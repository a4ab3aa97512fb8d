//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::matrix::DenseMatrix;

/// Matrix with rows drawn from N(0, (2/m) I), the initialization used by
/// every trainable layer here. `m` is the fan that sets the variance (the
/// hidden width), independent of the matrix's own shape.
pub fn gaussian_row_init(rows: usize, cols: usize, m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let sd = (2.0 / m as f64).sqrt();
    let normal = Normal::new(0.0, sd).expect("valid std dev");
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite gaussian draws")
}

/// Standard normal matrix, for probes and synthetic inputs.
pub fn standard_normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let normal = Normal::new(0.0, 1.0).expect("valid std dev");
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite gaussian draws")
}

/// Fixed output vector of length `m`: first half +1, second half -1.
/// Used as the frozen classification head in the end-to-end experiment.
pub fn sign_split_vector(m: usize) -> Vec<f64> {
    let mut u = vec![1.0; m];
    for v in u.iter_mut().skip(m / 2) {
        *v = -1.0;
    }
    u
}

/// Uniform draw in [lo, hi) per entry.
pub fn uniform_matrix(
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite uniform draws")
}
