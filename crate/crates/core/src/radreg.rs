//! Empirical representation-induced Rademacher complexity: sign sampling,
//! closed-form inner suprema for linear head classes, Monte-Carlo
//! estimation over a frozen representation, and the regularized composite
//! loss used during pre-training.
//!
//! For a head ball of radius R the inner supremum is closed-form:
//! binary heads give `R |u|` with `u = (1/n) sum_i sigma_i h(x_i)`, and
//! Frobenius-ball matrix heads give `R |M|_F` with
//! `M = (1/n) sum_i h(x_i) sigma_i^T`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::masking::MaskedData;
use crate::matrix::{matmul, matmul_at, DenseMatrix};
use crate::models::losses::Autoencoder;
use crate::models::{Batch, Representation};
use crate::rng::{stream_rng, Stream};

/// B sampled sign configurations; each is `n x o` with entries in {-1,+1}
/// (`o = 1` for binary heads). Regenerating with the same seed reproduces
/// the identical signs.
#[derive(Debug, Clone, PartialEq)]
pub struct RademacherBatch {
    pub configs: Vec<DenseMatrix>,
    pub seed: u64,
}

impl RademacherBatch {
    pub fn count(&self) -> usize {
        self.configs.len()
    }

    pub fn samples(&self) -> usize {
        self.configs.first().map_or(0, DenseMatrix::rows)
    }

    pub fn classes(&self) -> usize {
        self.configs.first().map_or(0, DenseMatrix::cols)
    }
}

pub fn sample_rademacher(b: usize, n: usize, o: usize, seed: u64) -> Result<RademacherBatch> {
    if b == 0 || n == 0 || o == 0 {
        return Err(Error::validation("B, n and o must all be at least 1"));
    }
    let mut rng = stream_rng(seed, Stream::Rademacher);
    let configs = (0..b)
        .map(|_| {
            let data: Vec<f64> = (0..n * o)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            DenseMatrix::from_vec(n, o, data).expect("sign matrix is well formed")
        })
        .collect();
    Ok(RademacherBatch { configs, seed })
}

/// `M = (1/n) reps^T sigma`, the `p x o` moment the inner problem sees.
pub fn moment_matrix(reps: &DenseMatrix, sigma: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(matmul_at(reps, sigma)?.scale(1.0 / reps.rows() as f64))
}

/// Closed-form supremum of `(1/n) sum_i sigma_i theta . h(x_i)` over
/// `|theta| <= R`: value `R |u|`, maximizer `R u / |u|` (zero when u = 0).
pub fn inner_sup_binary(
    reps: &DenseMatrix,
    sigma: &[f64],
    radius: f64,
) -> Result<(f64, Vec<f64>)> {
    if radius <= 0.0 {
        return Err(Error::validation("head radius must be positive"));
    }
    if sigma.len() != reps.rows() {
        return Err(Error::validation("sign vector length must match samples"));
    }
    let n = reps.rows() as f64;
    let p = reps.cols();
    let mut u = vec![0.0; p];
    for (i, &s) in sigma.iter().enumerate() {
        for (uk, &r) in u.iter_mut().zip(reps.row(i)) {
            *uk += s * r / n;
        }
    }
    let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((0.0, vec![0.0; p]));
    }
    let theta: Vec<f64> = u.iter().map(|v| radius * v / norm).collect();
    Ok((radius * norm, theta))
}

/// Closed-form supremum of `tr(V M)` over the Frobenius ball
/// `|V|_F <= R`: value `R |M|_F`, maximizer `R M^T / |M|_F`.
pub fn inner_sup_multiclass(moment: &DenseMatrix, radius: f64) -> Result<(f64, DenseMatrix)> {
    if radius <= 0.0 {
        return Err(Error::validation("head radius must be positive"));
    }
    let norm = moment.frobenius_norm();
    if norm == 0.0 {
        return Ok((0.0, DenseMatrix::zeros(moment.cols(), moment.rows())));
    }
    let v = moment.transpose().scale(radius / norm);
    Ok((radius * norm, v))
}

/// Monte-Carlo estimate of the complexity: per-configuration closed-form
/// sup values, their mean, and the standard error of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerValue {
    pub per_config: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
}

pub fn estimate_complexity(
    rep: &dyn Representation,
    x: &Batch,
    signs: &RademacherBatch,
    radius: f64,
) -> Result<RegularizerValue> {
    if x.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    if signs.samples() != x.len() {
        return Err(Error::validation(
            "sign configurations must match the sample count",
        ));
    }
    let reps = rep.represent(x)?;
    let mut per_config = Vec::with_capacity(signs.count());
    for sigma in &signs.configs {
        let m = moment_matrix(&reps, sigma)?;
        per_config.push(radius * m.frobenius_norm());
    }
    let b = per_config.len() as f64;
    let mean = per_config.iter().sum::<f64>() / b;
    let std_err = if per_config.len() < 2 {
        0.0
    } else {
        let var = per_config.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (var / b).sqrt()
    };
    Ok(RegularizerValue {
        per_config,
        mean,
        std_err,
    })
}

/// `(R/n) sqrt(sum_i |h(x_i)|^2)`: the configuration-averaged estimate can
/// never exceed this.
pub fn jensen_upper_bound(reps: &DenseMatrix, radius: f64) -> f64 {
    radius * reps.sq_sum().sqrt() / reps.rows() as f64
}

/// Composite loss, its flat parameter gradient, and the per-configuration
/// dual gradients for the regularized pre-training objective
/// `L(w) + (lambda/B) sum_j R_j(v_j, w)` with
/// `R_j(v, w) = (1/n) sum_i sigma_i^j . V h_w(x_i) = tr(V M_j(w))`.
#[derive(Debug, Clone)]
pub struct RadRegEval {
    pub loss: f64,
    pub reconstruction_loss: f64,
    pub reg_values: Vec<f64>,
    pub grad_w: Vec<f64>,
    /// `d R_j / d V`, independent of the dual because the head is linear.
    pub grads_v: Vec<DenseMatrix>,
}

pub fn radreg_loss_and_grad(
    model: &Autoencoder,
    duals: &[DenseMatrix],
    pretrain: &MaskedData,
    masked_only: bool,
    downstream_x: &Batch,
    signs: &RademacherBatch,
    lambda: f64,
) -> Result<RadRegEval> {
    if lambda < 0.0 {
        return Err(Error::validation("lambda must be nonnegative"));
    }
    if duals.len() != signs.count() {
        return Err(Error::validation("one dual variable per configuration"));
    }
    let masks = masked_only.then_some(pretrain.masked.as_slice());
    let (recon, mut grad_w) = model.loss_and_grad_flat(&pretrain.input, &pretrain.target, masks)?;

    let reps = model.representation(downstream_x)?;
    let n_prime = reps.rows() as f64;
    let b = signs.count() as f64;
    let mut reg_values = Vec::with_capacity(signs.count());
    let mut grads_v = Vec::with_capacity(signs.count());
    for (sigma, v) in signs.configs.iter().zip(duals) {
        let m = moment_matrix(&reps, sigma)?;
        reg_values.push(v.dot(&m.transpose()));
        grads_v.push(m.transpose());
    }

    let mut loss = recon;
    if lambda > 0.0 {
        loss += lambda / b * reg_values.iter().sum::<f64>();
        // Cotangent on representation row i: (lambda / (B n)) sum_j sigma_i^j V_j.
        let mut cot = DenseMatrix::zeros(reps.rows(), reps.cols());
        for (sigma, v) in signs.configs.iter().zip(duals) {
            cot.axpy(1.0, &matmul(sigma, v)?)?;
        }
        let cot = cot.scale(lambda / (b * n_prime));
        let reg_grad = model.representation_backward_flat(downstream_x, &cot)?;
        for (g, r) in grad_w.iter_mut().zip(&reg_grad) {
            *g += r;
        }
    }

    Ok(RadRegEval {
        loss,
        reconstruction_loss: recon,
        reg_values,
        grad_w,
        grads_v,
    })
}
