//! End-to-end gradient-descent experiment: reconstruction pre-training of
//! an L-layer MLP, then joint fine-tuning of the encoder and a fresh
//! nonlinear head, tracking how far every weight matrix drifts from its
//! Gaussian initialization.

use crate::error::{Error, Result};
use crate::masking::MaskedData;
use crate::matrix::{spectral_norm, DenseMatrix};
use crate::models::init::{gaussian_row_init, sign_split_vector};
use crate::models::losses::{Autoencoder, CeModel, UHeadModel};
use crate::models::mlp::MlpEncoder;

use crate::pretrain::gd_step;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct EndToEndConfig {
    pub input_dim: usize,
    /// Hidden width `m`; must be even so the frozen +1/-1 head splits in half.
    pub hidden: usize,
    pub encoder_depth: usize,
    pub pretrain_iters: usize,
    pub finetune_iters: usize,
    /// Pre-training step is `eta_multiplier * d / m`.
    pub eta_multiplier: f64,
    /// Fine-tuning encoder step is `gamma_multiplier / (m L^3)`.
    pub gamma_multiplier: f64,
    /// Step applied to the nonlinear head map; the printed update has none,
    /// so the default is 1.
    pub head_step: f64,
    pub seed: u64,
}

impl EndToEndConfig {
    pub fn eta(&self) -> f64 {
        self.eta_multiplier * self.input_dim as f64 / self.hidden as f64
    }

    pub fn gamma(&self) -> f64 {
        let l = self.encoder_depth.max(1) as f64;
        self.gamma_multiplier / (self.hidden as f64 * l.powi(3))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return Err(Error::validation(
                "hidden width must be even and positive for the sign-split head",
            ));
        }
        if self.encoder_depth == 0 {
            return Err(Error::validation("encoder needs at least one layer"));
        }
        if self.eta_multiplier <= 0.0 || self.gamma_multiplier <= 0.0 {
            return Err(Error::validation("step multipliers must be positive"));
        }
        Ok(())
    }
}

/// Frobenius and spectral distance from a reference matrix, per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTrace {
    pub name: String,
    pub fro: Vec<f64>,
    pub spectral: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DriftReport {
    /// Encoder layers, tracked from Gaussian init across both stages
    /// (length T1 + T2 + 1 each), then the decoder (pre-training only,
    /// length T1 + 1), then the head map (fine-tuning only, length T2 + 1).
    pub traces: Vec<DriftTrace>,
    pub pretrain_loss: Vec<f64>,
    pub finetune_loss: Vec<f64>,
    pub eta: f64,
    pub gamma: f64,
    /// Iteration (in combined t order) where the loss stopped being finite,
    /// if it did; traces hold everything up to that point.
    pub diverged_at: Option<usize>,
}

const DRIFT_TOL: f64 = 1e-8;
const DRIFT_ITERS: usize = 50_000;

fn drift_of(current: &DenseMatrix, reference: &DenseMatrix) -> Result<(f64, f64)> {
    let diff = current.sub(reference)?;
    let fro = diff.frobenius_norm();
    let spec = if fro == 0.0 {
        0.0
    } else {
        spectral_norm(&diff, DRIFT_TOL, DRIFT_ITERS)?
    };
    Ok((fro, spec))
}

/// Runs both stages and records drift, per the configured step sizes.
pub fn run_endtoend(
    cfg: &EndToEndConfig,
    pretrain_data: &MaskedData,
    finetune_x: &DenseMatrix,
    finetune_y: &[f64],
) -> Result<DriftReport> {
    cfg.validate()?;
    let (d, m, depth) = (cfg.input_dim, cfg.hidden, cfg.encoder_depth);
    let eta = cfg.eta();
    let gamma = cfg.gamma();

    let mut rng = stream_rng(cfg.seed, Stream::Init);
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let cols = if l == 0 { d } else { m };
        layers.push(gaussian_row_init(m, cols, m, &mut rng));
    }
    let decoder0 = gaussian_row_init(d, m, m, &mut rng);
    let refs: Vec<DenseMatrix> = layers.clone();
    let decoder_ref = decoder0.clone();

    let mut traces: Vec<DriftTrace> = (0..depth)
        .map(|l| DriftTrace {
            name: format!("enc.{l}"),
            fro: vec![0.0],
            spectral: vec![0.0],
        })
        .collect();
    traces.push(DriftTrace {
        name: "dec".to_string(),
        fro: vec![0.0],
        spectral: vec![0.0],
    });

    let mut model = Autoencoder::Ce(CeModel {
        encoder: MlpEncoder::new(layers)?,
        decoder: decoder0,
    });
    let mut pretrain_loss = Vec::with_capacity(cfg.pretrain_iters + 1);
    let mut diverged_at = None;

    for t in 0..cfg.pretrain_iters {
        let (loss, grad) =
            model.loss_and_grad_flat(&pretrain_data.input, &pretrain_data.target, None)?;
        pretrain_loss.push(loss);
        if !loss.is_finite() {
            diverged_at = Some(t);
            break;
        }
        let mut w = model.params_flat();
        gd_step(&mut w, &grad, eta);
        model.set_params_flat(&w)?;
        let Autoencoder::Ce(ce) = &model else { unreachable!() };
        for (l, trace) in traces.iter_mut().enumerate().take(depth) {
            let (f, s) = drift_of(&ce.encoder.layers()[l], &refs[l])?;
            trace.fro.push(f);
            trace.spectral.push(s);
        }
        let (f, s) = drift_of(&ce.decoder, &decoder_ref)?;
        traces[depth].fro.push(f);
        traces[depth].spectral.push(s);
    }
    if diverged_at.is_none() && cfg.pretrain_iters > 0 {
        let (loss, _) =
            model.loss_and_grad_flat(&pretrain_data.input, &pretrain_data.target, None)?;
        pretrain_loss.push(loss);
    }

    // Fine-tuning: drop the decoder, add a fresh Gaussian m x m head map
    // under the frozen sign-split output vector, and update encoder (step
    // gamma) and head (step head_step) jointly.
    let Autoencoder::Ce(ce) = model else { unreachable!() };
    let mut rng_ft = stream_rng(cfg.seed.wrapping_add(1), Stream::Init);
    let theta0 = gaussian_row_init(m, m, m, &mut rng_ft);
    let theta_ref = theta0.clone();
    let mut net = UHeadModel {
        encoder: ce.encoder,
        theta: theta0,
        u: sign_split_vector(m),
    };
    traces.push(DriftTrace {
        name: "theta".to_string(),
        fro: vec![0.0],
        spectral: vec![0.0],
    });
    let mut finetune_loss = Vec::with_capacity(cfg.finetune_iters + 1);

    if diverged_at.is_none() {
        for t in 0..cfg.finetune_iters {
            let (loss, d_theta, enc_grads) = net.loss_and_grads(finetune_x, finetune_y)?;
            finetune_loss.push(loss);
            if !loss.is_finite() {
                diverged_at = Some(cfg.pretrain_iters + t);
                break;
            }
            for (w, g) in net.encoder.layers_mut().iter_mut().zip(&enc_grads) {
                w.axpy(-gamma, g)?;
            }
            net.theta.axpy(-cfg.head_step, &d_theta)?;
            for (l, trace) in traces.iter_mut().enumerate().take(depth) {
                let (f, s) = drift_of(&net.encoder.layers()[l], &refs[l])?;
                trace.fro.push(f);
                trace.spectral.push(s);
            }
            let (f, s) = drift_of(&net.theta, &theta_ref)?;
            traces[depth + 1].fro.push(f);
            traces[depth + 1].spectral.push(s);
        }
        if diverged_at.is_none() && cfg.finetune_iters > 0 {
            let (loss, _, _) = net.loss_and_grads(finetune_x, finetune_y)?;
            finetune_loss.push(loss);
        }
    }

    Ok(DriftReport {
        traces,
        pretrain_loss,
        finetune_loss,
        eta,
        gamma,
        diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Batch;
    use crate::masking::{apply_mask, MaskGranularity, MaskTransform};
    use crate::models::init::standard_normal;

    fn setup(seed: u64) -> (MaskedData, DenseMatrix, Vec<f64>) {
        let mut rng = stream_rng(seed, Stream::Probe);
        let z = Batch::Vectors(standard_normal(12, 4, &mut rng));
        let data = apply_mask(
            &z,
            &MaskTransform {
                mask_ratio: 0.25,
                fill_value: 0.0,
                seed,
                granularity: MaskGranularity::Coordinate,
            },
        )
        .unwrap();
        let x = standard_normal(6, 4, &mut rng);
        let y: Vec<f64> = (0..6).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        (data, x, y)
    }

    fn config() -> EndToEndConfig {
        EndToEndConfig {
            input_dim: 4,
            hidden: 16,
            encoder_depth: 2,
            pretrain_iters: 5,
            finetune_iters: 5,
            eta_multiplier: 1.0,
            gamma_multiplier: 1.0,
            head_step: 1.0,
            seed: 3,
        }
    }

    #[test]
    fn zero_iterations_leave_zero_drift() {
        let (data, x, y) = setup(1);
        let mut cfg = config();
        cfg.pretrain_iters = 0;
        cfg.finetune_iters = 0;
        let report = run_endtoend(&cfg, &data, &x, &y).unwrap();
        for t in &report.traces {
            assert_eq!(t.fro, vec![0.0], "{}", t.name);
            assert_eq!(t.spectral, vec![0.0], "{}", t.name);
        }
    }

    #[test]
    fn first_step_drift_is_eta_times_gradient_norm() {
        let (data, x, y) = setup(2);
        let mut cfg = config();
        cfg.pretrain_iters = 1;
        cfg.finetune_iters = 0;
        let report = run_endtoend(&cfg, &data, &x, &y).unwrap();

        // Recompute the gradient at the same initialization.
        let mut rng = stream_rng(cfg.seed, Stream::Init);
        let mut layers = Vec::new();
        for l in 0..cfg.encoder_depth {
            let cols = if l == 0 { cfg.input_dim } else { cfg.hidden };
            layers.push(gaussian_row_init(cfg.hidden, cols, cfg.hidden, &mut rng));
        }
        let decoder = gaussian_row_init(cfg.input_dim, cfg.hidden, cfg.hidden, &mut rng);
        let model = Autoencoder::Ce(CeModel {
            encoder: MlpEncoder::new(layers).unwrap(),
            decoder,
        });
        let (_, grad) = model
            .loss_and_grad_flat(&data.input, &data.target, None)
            .unwrap();

        let mut off = 0;
        let Autoencoder::Ce(ce) = &model else { unreachable!() };
        for (l, w) in ce.encoder.layers().iter().enumerate() {
            let n = w.data().len();
            let gnorm: f64 = grad[off..off + n].iter().map(|g| g * g).sum::<f64>().sqrt();
            off += n;
            let want = cfg.eta() * gnorm;
            let got = report.traces[l].fro[1];
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1.0),
                "layer {l}: drift {got} vs eta*grad {want}"
            );
        }
    }

    #[test]
    fn reference_run_decreases_finetune_loss_and_stays_finite() {
        let (data, x, y) = setup(3);
        let mut cfg = config();
        cfg.pretrain_iters = 30;
        cfg.finetune_iters = 30;
        let report = run_endtoend(&cfg, &data, &x, &y).unwrap();
        assert!(report.diverged_at.is_none());
        let first = report.finetune_loss[0];
        let last = *report.finetune_loss.last().unwrap();
        assert!(last < first, "fine-tune loss {first} -> {last}");
        for t in &report.traces {
            assert!(t.fro.iter().all(|v| v.is_finite()));
            assert!(t.spectral.iter().all(|v| v.is_finite()));
        }
    }
}
