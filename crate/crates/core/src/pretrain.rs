//! Gradient-descent pre-training of the two autoencoders and projected
//! gradient-descent fine-tuning of a linear head on frozen representations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::masking::MaskedData;
use crate::matrix::DenseMatrix;
use crate::models::losses::{head_logistic_risk, Autoencoder};

use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// `None` selects full-batch gradient descent.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::validation("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// One plain gradient step. Every trainer in the workspace goes through
/// this helper so degenerate configurations stay bit-identical.
pub fn gd_step(params: &mut [f64], grad: &[f64], eta: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= eta * g;
    }
}

/// Minibatch index selection: `None` keeps the full batch (and consumes no
/// randomness); otherwise a uniform sample without replacement, in draw
/// order.
pub fn select_batch(n: usize, batch_size: Option<usize>, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let b = batch_size?;
    if b >= n {
        return None;
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(b);
    Some(pool)
}

fn subset_masks(masks: &[Vec<usize>], idx: &[usize]) -> Vec<Vec<usize>> {
    idx.iter().map(|&i| masks[i].clone()).collect()
}

/// Gradient descent on the reconstruction objective. Returns the loss
/// trace: entries `0..T` are the loss on each iteration's batch before the
/// step, entry `T` is the loss on the full data at the final weights.
///
/// A non-finite loss aborts with the iteration index and the last finite
/// value.
pub fn pretrain(
    model: &mut Autoencoder,
    cfg: &TrainConfig,
    data: &MaskedData,
    masked_only: bool,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.input.is_empty() {
        return Err(Error::validation("empty pre-training batch"));
    }
    let n = data.input.len();
    let mut rng = stream_rng(cfg.seed, Stream::Batch);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut last_finite = f64::NAN;
    let masks = masked_only.then_some(data.masked.as_slice());

    for t in 0..cfg.iterations {
        let idx = select_batch(n, cfg.batch_size, &mut rng);
        let (loss, grad) = match &idx {
            None => model.loss_and_grad_flat(&data.input, &data.target, masks)?,
            Some(idx) => {
                let input = data.input.select(idx);
                let target = data.target.select(idx);
                let sub = masks.map(|m| subset_masks(m, idx));
                model.loss_and_grad_flat(&input, &target, sub.as_deref())?
            }
        };
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                last_loss: last_finite,
            });
        }
        last_finite = loss;
        trace.push(loss);
        let mut w = model.params_flat();
        gd_step(&mut w, &grad, cfg.learning_rate);
        model.set_params_flat(&w)?;
    }

    let (final_loss, _) = model.loss_and_grad_flat(&data.input, &data.target, masks)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            iteration: cfg.iterations,
            last_loss: last_finite,
        });
    }
    trace.push(final_loss);
    Ok(trace)
}

/// Linear classification head constrained to a Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub theta: Vec<f64>,
    pub radius: f64,
}

impl LinearHead {
    pub fn project(&mut self) {
        let norm: f64 = self.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.radius {
            let s = self.radius / norm;
            self.theta.iter_mut().for_each(|v| *v *= s);
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub head: LinearHead,
    /// Training risk before each step plus the final risk (length T+1).
    pub train_risk: Vec<f64>,
    /// Held-out risk on the same schedule; empty when no eval set given.
    pub eval_risk: Vec<f64>,
    /// Held-out sign accuracy on the same schedule.
    pub eval_accuracy: Vec<f64>,
}

/// Projected gradient descent on the logistic risk of a linear head over
/// frozen representation rows. The head starts at zero.
pub fn finetune_linear(
    reps: &DenseMatrix,
    labels: &[f64],
    cfg: &TrainConfig,
    radius: f64,
    eval: Option<(&DenseMatrix, &[f64])>,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if radius <= 0.0 {
        return Err(Error::validation("head radius must be positive"));
    }
    if reps.rows() == 0 {
        return Err(Error::validation("empty fine-tuning batch"));
    }
    let mut head = LinearHead {
        theta: vec![0.0; reps.cols()],
        radius,
    };
    let mut train_risk = Vec::with_capacity(cfg.iterations + 1);
    let mut eval_risk = Vec::new();
    let mut eval_accuracy = Vec::new();
    for _ in 0..cfg.iterations {
        let (risk, grad) = head_logistic_risk(reps, &head.theta, labels)?;
        train_risk.push(risk);
        if let Some((ex, ey)) = eval {
            eval_risk.push(head_logistic_risk(ex, &head.theta, ey)?.0);
            eval_accuracy.push(crate::models::losses::head_accuracy(ex, &head.theta, ey));
        }
        gd_step(&mut head.theta, &grad, cfg.learning_rate);
        head.project();
    }
    let (final_risk, _) = head_logistic_risk(reps, &head.theta, labels)?;
    train_risk.push(final_risk);
    if let Some((ex, ey)) = eval {
        eval_risk.push(head_logistic_risk(ex, &head.theta, ey)?.0);
        eval_accuracy.push(crate::models::losses::head_accuracy(ex, &head.theta, ey));
    }
    Ok(FinetuneOutcome {
        head,
        train_risk,
        eval_risk,
        eval_accuracy,
    })
}

/// Builders for freshly initialized models (rows drawn N(0, 2I/m)).
pub mod build {
    use super::*;
    use crate::models::attention::{SaLayer, TransformerEncoder};
    use crate::models::init::gaussian_row_init;
    use crate::models::losses::{CeModel, MaeModel};
    use crate::models::mlp::MlpEncoder;

    /// `L`-layer ReLU encoder (`m x d`, then `m x m`) with a `d_out x m`
    /// linear decoder.
    pub fn ce_model(
        input_dim: usize,
        hidden: usize,
        depth: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<CeModel> {
        let mut rng = stream_rng(seed, Stream::Init);
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let cols = if l == 0 { input_dim } else { hidden };
            layers.push(gaussian_row_init(hidden, cols, hidden, &mut rng));
        }
        let decoder = gaussian_row_init(output_dim, hidden, hidden, &mut rng);
        Ok(CeModel {
            encoder: MlpEncoder::new(layers)?,
            decoder,
        })
    }

    /// `L`-layer self-attention encoder with a `d x d` patch decoder.
    /// The same per-row variance rule is applied to all five weight
    /// matrices of every layer.
    #[allow(clippy::too_many_arguments)]
    pub fn mae_model(
        patch_dim: usize,
        attn_dim: usize,
        hidden: usize,
        depth: usize,
        patch_count: usize,
        alpha1: f64,
        alpha2: f64,
        seed: u64,
    ) -> Result<MaeModel> {
        let mut rng = stream_rng(seed, Stream::Init);
        let mut layers = Vec::with_capacity(depth);
        for _ in 0..depth {
            layers.push(SaLayer::new(
                gaussian_row_init(patch_dim, patch_dim, hidden, &mut rng),
                gaussian_row_init(patch_dim, attn_dim, hidden, &mut rng),
                gaussian_row_init(patch_dim, attn_dim, hidden, &mut rng),
                gaussian_row_init(patch_dim, hidden, hidden, &mut rng),
                gaussian_row_init(hidden, patch_dim, hidden, &mut rng),
                alpha1,
                alpha2,
            )?);
        }
        let decoder = gaussian_row_init(patch_dim, patch_dim, hidden, &mut rng);
        Ok(MaeModel {
            encoder: TransformerEncoder::new(layers, patch_count)?,
            decoder,
        })
    }
}

/// Warn-level check of the sample-size assumption
/// `N >= n^{3/2} L^{2/3}` (constant one).
pub fn sample_size_warning(n_pretrain: usize, n_downstream: usize, depth: usize) -> Option<String> {
    let needed = (n_downstream as f64).powf(1.5) * (depth as f64).powf(2.0 / 3.0);
    if (n_pretrain as f64) < needed {
        Some(format!(
            "pre-training set of {n_pretrain} is below the n^(3/2) L^(2/3) = {needed:.1} guideline for n = {n_downstream}, L = {depth}"
        ))
    } else {
        None
    }
}
