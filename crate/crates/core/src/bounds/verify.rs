//! Empirical verifiers for the attention-layer inequalities: the
//! contraction factor of one layer and the per-prefix norm-growth factors
//! of a stack.

use rand::Rng;

use crate::error::Result;
use crate::matrix::spectral_norm;
use crate::models::attention::{SaLayer, TransformerEncoder};
use crate::models::init::standard_normal;
use crate::rng::{substream_rng, Stream};

const NORM_TOL: f64 = 1e-9;
const NORM_ITERS: usize = 100_000;

/// Outcome of a randomized inequality sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest observed lhs/rhs ratio (1.0 is the boundary).
    pub worst_ratio: f64,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `|SA(X) - SA(X')| <= (a2 W^2 + 1)(a1 K W + 1) |X - X'|` on
/// random input pairs, with `W` the largest weight spectral norm. Inputs
/// are normalized to unit spectral norm with a 0.25-scaled perturbation.
pub fn verify_sa_contraction(
    layer: &SaLayer,
    patches: usize,
    trials: usize,
    seed: u64,
) -> Result<SweepReport> {
    let w = layer.max_weight_norm(NORM_TOL, NORM_ITERS)?;
    let factor =
        (layer.alpha2 * w * w + 1.0) * (layer.alpha1 * patches as f64 * w + 1.0);
    let d = layer.dim();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = substream_rng(seed, Stream::Probe, trial as u64);
        let raw = standard_normal(patches, d, &mut rng);
        let x = raw.scale(1.0 / spectral_norm(&raw, NORM_TOL, NORM_ITERS)?.max(1e-12));
        let dir = standard_normal(patches, d, &mut rng);
        let step = 0.25 * rng.random_range(0.1..1.0)
            / spectral_norm(&dir, NORM_TOL, NORM_ITERS)?.max(1e-12);
        let mut x_hat = x.clone();
        x_hat.axpy(step, &dir)?;

        let out = layer.forward(&x)?.output;
        let out_hat = layer.forward(&x_hat)?.output;
        let lhs = spectral_norm(&out.sub(&out_hat)?, NORM_TOL, NORM_ITERS)?;
        let rhs = factor * spectral_norm(&x.sub(&x_hat)?, NORM_TOL, NORM_ITERS)?;
        let ratio = if rhs == 0.0 {
            if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            lhs / rhs
        };
        worst = worst.max(ratio);
        if ratio > 1.0 + 1e-9 {
            violations += 1;
        }
    }
    Ok(SweepReport {
        trials,
        violations,
        worst_ratio: worst,
    })
}

/// Checks `|X^l| <= s_l |X^0|` for every layer prefix on random inputs,
/// with `s_l` built from the measured per-layer weight norms.
pub fn verify_norm_growth(
    encoder: &TransformerEncoder,
    trials: usize,
    seed: u64,
) -> Result<SweepReport> {
    let k = encoder.patch_count() as f64;
    let mut factors = Vec::with_capacity(encoder.layers().len());
    let mut running = 1.0f64;
    for layer in encoder.layers() {
        let w = layer.max_weight_norm(NORM_TOL, NORM_ITERS)?;
        running *= (layer.alpha2 * w * w + 1.0) * (w * w * layer.alpha1 * k + 1.0);
        factors.push(running);
    }
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = substream_rng(seed, Stream::Probe, 1_000_000 + trial as u64);
        let x = standard_normal(encoder.patch_count(), encoder.dim(), &mut rng);
        let base = spectral_norm(&x, NORM_TOL, NORM_ITERS)?;
        let outs = encoder.layer_outputs(&x)?;
        for (l, out) in outs.iter().skip(1).enumerate() {
            let lhs = spectral_norm(out, NORM_TOL, NORM_ITERS)?;
            let rhs = factors[l] * base;
            let ratio = if rhs == 0.0 { 0.0 } else { lhs / rhs };
            worst = worst.max(ratio);
            if ratio > 1.0 + 1e-9 {
                violations += 1;
            }
        }
    }
    Ok(SweepReport {
        trials,
        violations,
        worst_ratio: worst,
    })
}

/// A random layer with spectral norms scaled into [0.8, 1.2] and small
/// residual branches; the regime the growth factors are meant for.
pub fn sample_probe_layer(
    dim: usize,
    attn_dim: usize,
    hidden: usize,
    alpha1: f64,
    alpha2: f64,
    seed: u64,
) -> Result<SaLayer> {
    let mut rng = substream_rng(seed, Stream::Probe, 42);
    let mut scaled = |rows: usize, cols: usize| -> Result<crate::matrix::DenseMatrix> {
        let raw = standard_normal(rows, cols, &mut rng);
        let target = rng.random_range(0.8..1.2);
        let norm = spectral_norm(&raw, NORM_TOL, NORM_ITERS)?.max(1e-12);
        Ok(raw.scale(target / norm))
    };
    SaLayer::new(
        scaled(dim, dim)?,
        scaled(dim, attn_dim)?,
        scaled(dim, attn_dim)?,
        scaled(dim, hidden)?,
        scaled(hidden, dim)?,
        alpha1,
        alpha2,
    )
}
