//! Empirical transferability probe: compares the best linear-head logistic
//! risks and best linear-decoder reconstruction errors of two
//! representations, and checks the measured ratio against the analytic
//! ceiling derived from the cross-moment Schur complement.

use crate::bounds::eigen::{pinv_psd, sym_eigenvalues, symmetrize};
use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_at, matmul_bt, DenseMatrix};
use crate::models::{Batch, Representation};
use crate::pretrain::{finetune_linear, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TransferProbeConfig {
    /// Ball radius for both fitted heads.
    pub head_radius: f64,
    pub gd_steps: usize,
    pub gd_learning_rate: f64,
    /// Relative eigenvalue cutoff for pseudo-inverses.
    pub pinv_cutoff: f64,
}

impl Default for TransferProbeConfig {
    fn default() -> Self {
        TransferProbeConfig {
            head_radius: 10.0,
            gd_steps: 2000,
            gd_learning_rate: 0.5,
            pinv_cutoff: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferProbeResult {
    /// Best-head logistic risk gap (reference representation subtracted).
    pub delta_ft: f64,
    /// Best-decoder mean squared reconstruction gap.
    pub delta_pt: f64,
    /// `delta_ft / sqrt(delta_pt)`; zero when both gaps vanish.
    pub ratio: f64,
    /// Cross-moment defect `E[h*h*^T] - C^T E[hh^T]^+ C` with
    /// `C = E[h h*^T]`.
    pub lambda_schur: DenseMatrix,
    pub lambda_sigma_max: f64,
    /// Analytic ceiling on the ratio:
    /// `sqrt(p |theta*|^2 / sigma_min(W*^T W*))`.
    pub ceiling: f64,
    pub bound_ok: bool,
}

/// Closed-form least-squares decoder reconstructing `x` from `reps`, and
/// the mean squared error it attains.
fn best_decoder_mse(
    reps: &DenseMatrix,
    x: &DenseMatrix,
    cutoff: f64,
) -> Result<(DenseMatrix, f64)> {
    let n = reps.rows() as f64;
    let gram = matmul_at(reps, reps)?.scale(1.0 / n);
    let cross = matmul_at(reps, x)?.scale(1.0 / n);
    let w_t = matmul(&pinv_psd(&gram, cutoff)?, &cross)?; // p x d
    let pred = matmul(reps, &w_t)?;
    let mse = pred.sub(x)?.sq_sum() / n;
    Ok((w_t.transpose(), mse))
}

pub fn transferability_probe(
    h_hat: &dyn Representation,
    h_star: &dyn Representation,
    data: &Batch,
    labels: &[f64],
    cfg: &TransferProbeConfig,
) -> Result<TransferProbeResult> {
    if data.is_empty() {
        return Err(Error::validation("empty probe batch"));
    }
    let Batch::Vectors(x) = data else {
        return Err(Error::validation("the probe works on vector samples"));
    };
    let reps_hat = h_hat.represent(data)?;
    let reps_star = h_star.represent(data)?;
    if reps_hat.cols() != reps_star.cols() {
        return Err(Error::validation(
            "both encoders must produce the same output dimension",
        ));
    }
    let n = x.rows() as f64;
    let p = reps_hat.cols();

    // Fine-tuning gap: best projected-GD logistic heads on each side.
    let train = TrainConfig {
        learning_rate: cfg.gd_learning_rate,
        iterations: cfg.gd_steps,
        batch_size: None,
        seed: 0,
    };
    let fit_hat = finetune_linear(&reps_hat, labels, &train, cfg.head_radius, None)?;
    let fit_star = finetune_linear(&reps_star, labels, &train, cfg.head_radius, None)?;
    let risk_hat = *fit_hat.train_risk.last().unwrap();
    let risk_star = *fit_star.train_risk.last().unwrap();
    let delta_ft = risk_hat - risk_star;

    // Pre-training gap: closed-form least-squares decoders.
    let (dec_star, mse_star) = best_decoder_mse(&reps_star, x, cfg.pinv_cutoff)?;
    let (_, mse_hat) = best_decoder_mse(&reps_hat, x, cfg.pinv_cutoff)?;
    let delta_pt = mse_hat - mse_star;

    // Schur complement of the joint second moment, defect of the reference
    // representation given the probed one.
    let a = matmul_at(&reps_hat, &reps_hat)?.scale(1.0 / n);
    let b = matmul_at(&reps_star, &reps_star)?.scale(1.0 / n);
    let c = matmul_at(&reps_hat, &reps_star)?.scale(1.0 / n);
    let a_pinv = pinv_psd(&a, cfg.pinv_cutoff)?;
    let lambda = symmetrize(&b.sub(&matmul_at(&c, &matmul(&a_pinv, &c)?)?)?);
    let lambda_sigma_max = sym_eigenvalues(&lambda)?
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);

    let theta_star_sq: f64 = fit_star.head.theta.iter().map(|v| v * v).sum();
    let gram_dec = matmul_bt(&dec_star.transpose(), &dec_star.transpose())?; // W*^T W*, p x p
    let sigma_min_dec = sym_eigenvalues(&gram_dec)?
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);

    let tiny = 1e-12;
    let ratio = if delta_pt.abs() <= tiny && delta_ft.abs() <= tiny {
        0.0
    } else if delta_pt <= tiny {
        f64::INFINITY
    } else {
        delta_ft / delta_pt.sqrt()
    };
    let ceiling = if sigma_min_dec <= tiny {
        f64::INFINITY
    } else {
        (p as f64 * theta_star_sq / sigma_min_dec).sqrt()
    };
    let ft_ceiling = (p as f64 * lambda_sigma_max * theta_star_sq).sqrt();
    let slack = 1e-9;
    let bound_ok = (delta_ft <= ft_ceiling * (1.0 + 1e-6) + slack)
        && (ratio <= ceiling * (1.0 + 1e-6) + slack || ratio == 0.0);

    Ok(TransferProbeResult {
        delta_ft,
        delta_pt,
        ratio,
        lambda_schur: lambda,
        lambda_sigma_max,
        ceiling,
        bound_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init::standard_normal;
    use crate::models::LinearMap;
    use crate::rng::{stream_rng, Stream};

    fn planted_data(n: usize, d: usize, seed: u64) -> (Batch, Vec<f64>, Vec<f64>) {
        let mut rng = stream_rng(seed, Stream::Probe);
        let mut x = standard_normal(n, d, &mut rng);
        let w: Vec<f64> = {
            let raw = standard_normal(1, d, &mut rng);
            let norm = raw.frobenius_norm();
            raw.row(0).iter().map(|v| v / norm).collect()
        };
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let mut score: f64 = x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
            if score.abs() < 0.2 {
                // push the point off the boundary to keep a margin
                let shift = 0.2 * score.signum().max(0.0).mul_add(2.0, -1.0);
                for (c, wc) in w.iter().enumerate() {
                    let v = x.get(i, c) + shift * wc;
                    x.set(i, c, v);
                }
                score += shift;
            }
            labels.push(if score >= 0.0 { 1.0 } else { -1.0 });
        }
        (Batch::Vectors(x), labels, w)
    }

    #[test]
    fn identical_encoders_give_vanishing_gaps_and_defect() {
        let (data, labels, _) = planted_data(40, 4, 1);
        let mut rng = stream_rng(2, Stream::Probe);
        let p = standard_normal(4, 4, &mut rng);
        let enc = LinearMap(p);
        let out = transferability_probe(&enc, &enc, &data, &labels, &Default::default())
            .unwrap();
        assert!(out.delta_ft.abs() < 1e-9, "delta_ft {}", out.delta_ft);
        assert!(out.delta_pt.abs() < 1e-9, "delta_pt {}", out.delta_pt);
        assert!(
            out.lambda_schur.max_abs() < 1e-9,
            "lambda {}",
            out.lambda_schur.max_abs()
        );
        assert!(out.bound_ok);
    }

    #[test]
    fn rotated_encoder_changes_nothing_a_rotation_invariant_head_sees() {
        let (data, labels, _) = planted_data(40, 4, 3);
        let mut rng = stream_rng(4, Stream::Probe);
        let p = standard_normal(4, 4, &mut rng);
        // Orthogonal rotation built by Gram-Schmidt on random columns.
        let q = {
            let raw = standard_normal(4, 4, &mut rng);
            let mut cols: Vec<Vec<f64>> = Vec::new();
            for c in 0..4 {
                let mut v: Vec<f64> = (0..4).map(|r| raw.get(r, c)).collect();
                for u in &cols {
                    let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi -= d * ui;
                    }
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                cols.push(v);
            }
            let mut q = DenseMatrix::zeros(4, 4);
            for (c, col) in cols.iter().enumerate() {
                for (r, &v) in col.iter().enumerate() {
                    q.set(r, c, v);
                }
            }
            q
        };
        let rotated = LinearMap(matmul(&q, &p).unwrap());
        let base = LinearMap(p);
        let out =
            transferability_probe(&rotated, &base, &data, &labels, &Default::default()).unwrap();
        assert!(
            out.delta_ft.abs() < 1e-6,
            "rotation should not change the best-head risk: {}",
            out.delta_ft
        );
        assert!(out.delta_pt.abs() < 1e-9);
        assert!(out.bound_ok);
    }

    #[test]
    fn rank_deficient_probe_stays_under_the_ceiling() {
        let (data, labels, w) = planted_data(60, 4, 5);
        let mut rng = stream_rng(6, Stream::Probe);
        let p = {
            // Well-conditioned reference map.
            let raw = standard_normal(4, 4, &mut rng);
            raw.add(&DenseMatrix::identity(4).scale(2.0)).unwrap()
        };
        let h_star = LinearMap(p.clone());
        // Project out a direction partially aligned with the planted rule.
        let mut v = w.clone();
        v[0] += 0.5;
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut proj = DenseMatrix::identity(4);
        for r in 0..4 {
            for c in 0..4 {
                let val = proj.get(r, c) - v[r] * v[c];
                proj.set(r, c, val);
            }
        }
        let h_hat = LinearMap(matmul(&p, &proj).unwrap());
        let out =
            transferability_probe(&h_hat, &h_star, &data, &labels, &Default::default()).unwrap();
        assert!(out.delta_pt > 1e-6, "information was lost: {}", out.delta_pt);
        assert!(out.ratio.is_finite());
        assert!(out.bound_ok, "ratio {} ceiling {}", out.ratio, out.ceiling);
    }
}
