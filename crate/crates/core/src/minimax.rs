//! Stochastic gradient descent-ascent for the regularized pre-training
//! objective, the theoretical step-size schedule, and Moreau-envelope
//! stationarity diagnostics.
//!
//! One iteration: sample a pre-training and a downstream minibatch, ascend
//! every dual by its coupling gradient, then descend the primal using the
//! couplings evaluated at the *pre-update* duals. Dual ascent steps are
//! followed by projection onto the D-ball unless projection is disabled.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::masking::MaskedData;
use crate::matrix::DenseMatrix;
use crate::models::losses::Autoencoder;
use crate::models::Batch;
use crate::pretrain::{gd_step, select_batch};
use crate::radreg::{moment_matrix, RademacherBatch};
use crate::rng::{stream_rng, Stream};

/// What one iteration needs from the problem: stochastic loss with
/// gradient, coupling values/gradients at the current duals, and the dual
/// ascent directions. `grad_w` must already include the lambda-weighted
/// coupling contribution evaluated at the passed-in duals.
pub struct IterationEval {
    pub loss: f64,
    pub grad_w: Vec<f64>,
    pub reg_values: Vec<f64>,
    pub dual_grads: Vec<DenseMatrix>,
}

pub trait MinimaxOracle {
    fn primal_dim(&self) -> usize;
    fn num_duals(&self) -> usize;
    /// Shape of each dual variable (`o x p`).
    fn dual_shape(&self) -> (usize, usize);

    fn evaluate(
        &mut self,
        w: &[f64],
        duals: &[DenseMatrix],
        lambda: f64,
        rng_pre: &mut ChaCha8Rng,
        rng_down: &mut ChaCha8Rng,
    ) -> Result<IterationEval>;

    /// Full-batch primal value and gradient with the inner suprema solved
    /// in closed form over the `radius`-ball (for stationarity probes).
    fn primal_value_and_grad(
        &self,
        w: &[f64],
        lambda: f64,
        radius: f64,
    ) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdaConfig {
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub iterations: usize,
    /// Ball radius for the duals; `None` disables the projection step.
    pub dual_radius: Option<f64>,
    pub seed: u64,
    /// Probe the Moreau gradient of the primal every `cadence` iterations.
    pub probe: Option<SgdaProbeConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdaProbeConfig {
    pub cadence: usize,
    pub probe: MoreauProbe,
    /// Ball radius used by the closed-form inner supremum in the probe.
    pub radius: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SgdaTrace {
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub reg_mean: Vec<f64>,
    /// `(iteration, |moreau gradient|^2)` at each probe point.
    pub moreau_sq: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct SgdaRun {
    pub final_w: Vec<f64>,
    /// Iterate at an index drawn uniformly from 1..=T up front.
    pub sampled_w: Vec<f64>,
    pub sampled_index: usize,
    pub duals: Vec<DenseMatrix>,
    pub trace: SgdaTrace,
}

fn project_dual(v: &mut DenseMatrix, radius: f64) {
    let norm = v.frobenius_norm();
    if norm > radius {
        let s = radius / norm;
        v.data_mut().iter_mut().for_each(|x| *x *= s);
    }
}

pub fn radreg_train(
    oracle: &mut dyn MinimaxOracle,
    w0: Vec<f64>,
    cfg: &SgdaConfig,
) -> Result<SgdaRun> {
    if cfg.eta <= 0.0 || cfg.gamma < 0.0 {
        return Err(Error::validation("eta must be positive and gamma nonnegative"));
    }
    if cfg.lambda < 0.0 {
        return Err(Error::validation("lambda must be nonnegative"));
    }
    if w0.len() != oracle.primal_dim() {
        return Err(Error::validation("w0 has the wrong dimension"));
    }
    let (o, p) = oracle.dual_shape();
    let mut duals = vec![DenseMatrix::zeros(o, p); oracle.num_duals()];
    let mut w = w0;
    let mut rng_pre = stream_rng(cfg.seed, Stream::Batch);
    let mut rng_down = stream_rng(cfg.seed, Stream::BatchDownstream);
    let sampled_index = if cfg.iterations == 0 {
        0
    } else {
        stream_rng(cfg.seed, Stream::IterateChoice).random_range(1..=cfg.iterations)
    };
    let mut sampled_w = w.clone();
    let mut trace = SgdaTrace::default();

    for t in 0..cfg.iterations {
        if let Some(pc) = &cfg.probe {
            if t % pc.cadence == 0 {
                let sq = moreau_probe_sq(oracle, &w, cfg.lambda, pc)?;
                trace.moreau_sq.push((t, sq));
            }
        }
        let eval = oracle.evaluate(&w, &duals, cfg.lambda, &mut rng_pre, &mut rng_down)?;
        if eval.grad_w.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite primal gradient at iteration {t} (loss {})",
                eval.loss
            )));
        }
        trace.loss.push(eval.loss);
        trace
            .grad_norm
            .push(eval.grad_w.iter().map(|g| g * g).sum::<f64>().sqrt());
        trace.reg_mean.push(
            eval.reg_values.iter().sum::<f64>() / eval.reg_values.len().max(1) as f64,
        );

        if cfg.gamma > 0.0 {
            for (v, g) in duals.iter_mut().zip(&eval.dual_grads) {
                if g.data().iter().any(|x| !x.is_finite()) {
                    return Err(Error::numerical(format!(
                        "non-finite dual gradient at iteration {t}"
                    )));
                }
                v.axpy(cfg.gamma, g)?;
                if let Some(r) = cfg.dual_radius {
                    project_dual(v, r);
                }
            }
        }
        gd_step(&mut w, &eval.grad_w, cfg.eta);
        if t + 1 == sampled_index {
            sampled_w = w.clone();
        }
    }
    if let Some(pc) = &cfg.probe {
        if cfg.iterations % pc.cadence == 0 || cfg.iterations == 0 {
            let sq = moreau_probe_sq(oracle, &w, cfg.lambda, pc)?;
            trace.moreau_sq.push((cfg.iterations, sq));
        }
    }

    Ok(SgdaRun {
        final_w: w,
        sampled_w,
        sampled_index,
        duals,
        trace,
    })
}

fn moreau_probe_sq(
    oracle: &dyn MinimaxOracle,
    w: &[f64],
    lambda: f64,
    pc: &SgdaProbeConfig,
) -> Result<f64> {
    let psi = |x: &[f64]| oracle.primal_value_and_grad(x, lambda, pc.radius);
    let g = moreau_gradient(&psi, w, &pc.probe)?;
    Ok(g.iter().map(|v| v * v).sum())
}

/// Regularized autoencoder pre-training as a minimax problem: primal = all
/// model parameters, duals = per-configuration linear heads on the
/// downstream representations. Optional extras used by comparison
/// experiments: an auxiliary reconstruction loss on downstream data
/// (weight `aux_weight`) and an L2 penalty on encoder weights.
pub struct RadRegOracle {
    pub model: Autoencoder,
    pub pretrain: MaskedData,
    pub masked_only: bool,
    pub downstream_x: Batch,
    pub signs: RademacherBatch,
    pub batch_size: Option<usize>,
    pub aux: Option<(MaskedData, f64)>,
    pub l2_weight: f64,
}

impl RadRegOracle {
    fn loss_terms(
        &mut self,
        w: &[f64],
        pre_idx: Option<&[usize]>,
    ) -> Result<(f64, Vec<f64>)> {
        self.model.set_params_flat(w)?;
        let masks = self.masked_only.then_some(self.pretrain.masked.as_slice());
        let (mut loss, mut grad) = match pre_idx {
            None => self
                .model
                .loss_and_grad_flat(&self.pretrain.input, &self.pretrain.target, masks)?,
            Some(idx) => {
                let input = self.pretrain.input.select(idx);
                let target = self.pretrain.target.select(idx);
                let sub: Option<Vec<Vec<usize>>> =
                    masks.map(|m| idx.iter().map(|&i| m[i].clone()).collect());
                self.model.loss_and_grad_flat(&input, &target, sub.as_deref())?
            }
        };
        if let Some((aux, weight)) = &self.aux {
            if *weight != 0.0 {
                let (al, ag) = self.model.loss_and_grad_flat(&aux.input, &aux.target, None)?;
                loss += weight * al;
                for (g, a) in grad.iter_mut().zip(&ag) {
                    *g += weight * a;
                }
            }
        }
        if self.l2_weight != 0.0 {
            let enc = self.model.encoder_param_count();
            loss += self.l2_weight * w[..enc].iter().map(|v| v * v).sum::<f64>();
            for (g, v) in grad[..enc].iter_mut().zip(&w[..enc]) {
                *g += 2.0 * self.l2_weight * v;
            }
        }
        Ok((loss, grad))
    }
}

impl MinimaxOracle for RadRegOracle {
    fn primal_dim(&self) -> usize {
        self.model.param_count()
    }

    fn num_duals(&self) -> usize {
        self.signs.count()
    }

    fn dual_shape(&self) -> (usize, usize) {
        (self.signs.classes(), self.model.rep_dim())
    }

    fn evaluate(
        &mut self,
        w: &[f64],
        duals: &[DenseMatrix],
        lambda: f64,
        rng_pre: &mut ChaCha8Rng,
        rng_down: &mut ChaCha8Rng,
    ) -> Result<IterationEval> {
        let pre_idx = select_batch(self.pretrain.input.len(), self.batch_size, rng_pre);
        let down_idx = select_batch(self.downstream_x.len(), self.batch_size, rng_down);
        let (loss_l, grad_l) = self.loss_terms(w, pre_idx.as_deref())?;

        let (down_batch, sigma_rows): (Batch, Vec<DenseMatrix>) = match &down_idx {
            None => (self.downstream_x.clone(), self.signs.configs.clone()),
            Some(idx) => (
                self.downstream_x.select(idx),
                self.signs
                    .configs
                    .iter()
                    .map(|c| {
                        let rows: Vec<Vec<f64>> =
                            idx.iter().map(|&i| c.row(i).to_vec()).collect();
                        DenseMatrix::from_rows(&rows).expect("sign rows well formed")
                    })
                    .collect(),
            ),
        };
        let reps = self.model.representation(&down_batch)?;
        let n_prime = reps.rows() as f64;
        let b = self.signs.count() as f64;

        let mut reg_values = Vec::with_capacity(duals.len());
        let mut dual_grads = Vec::with_capacity(duals.len());
        for (sigma, v) in sigma_rows.iter().zip(duals) {
            let m = moment_matrix(&reps, sigma)?;
            reg_values.push(v.dot(&m.transpose()));
            dual_grads.push(m.transpose());
        }

        let mut loss = loss_l;
        let mut grad_w = grad_l;
        if lambda > 0.0 {
            loss += lambda / b * reg_values.iter().sum::<f64>();
            let mut cot = DenseMatrix::zeros(reps.rows(), reps.cols());
            for (sigma, v) in sigma_rows.iter().zip(duals) {
                cot.axpy(1.0, &crate::matrix::matmul(sigma, v)?)?;
            }
            let cot = cot.scale(lambda / (b * n_prime));
            let reg_grad = self.model.representation_backward_flat(&down_batch, &cot)?;
            for (g, r) in grad_w.iter_mut().zip(&reg_grad) {
                *g += r;
            }
        }
        Ok(IterationEval {
            loss,
            grad_w,
            reg_values,
            dual_grads,
        })
    }

    fn primal_value_and_grad(
        &self,
        w: &[f64],
        lambda: f64,
        radius: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let mut this = RadRegOracle {
            model: self.model.clone(),
            pretrain: self.pretrain.clone(),
            masked_only: self.masked_only,
            downstream_x: self.downstream_x.clone(),
            signs: self.signs.clone(),
            batch_size: None,
            aux: self.aux.clone(),
            l2_weight: self.l2_weight,
        };
        let (mut loss, mut grad) = this.loss_terms(w, None)?;
        if lambda > 0.0 {
            let reps = this.model.representation(&this.downstream_x)?;
            let n_prime = reps.rows() as f64;
            let b = this.signs.count() as f64;
            let mut cot = DenseMatrix::zeros(reps.rows(), reps.cols());
            for sigma in &this.signs.configs {
                let m = moment_matrix(&reps, sigma)?;
                let norm = m.frobenius_norm();
                loss += lambda / b * radius * norm;
                if norm > 0.0 {
                    // Danskin direction: the maximizing dual R M^T / |M|_F.
                    let v_star = m.transpose().scale(radius / norm);
                    cot.axpy(1.0, &crate::matrix::matmul(sigma, &v_star)?)?;
                }
            }
            let cot = cot.scale(lambda / (b * n_prime));
            let reg_grad = this.model.representation_backward_flat(&this.downstream_x, &cot)?;
            for (g, r) in grad.iter_mut().zip(&reg_grad) {
                *g += r;
            }
        }
        Ok((loss, grad))
    }
}

/// Step sizes and predicted gradient complexity from the convergence
/// schedule, with all order constants set to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeInputs {
    pub epsilon: f64,
    pub smoothness: f64,
    pub dual_radius: f64,
    pub lipschitz: f64,
    pub noise: f64,
    pub batch: f64,
    pub configs: f64,
    /// Initial envelope gap; unobservable in general, defaulted to 1.
    pub envelope_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub eta: f64,
    pub gamma: f64,
    pub gradient_complexity: f64,
}

pub fn theoretical_step_sizes(inp: &StepSizeInputs) -> Result<StepSizes> {
    let StepSizeInputs {
        epsilon,
        smoothness,
        dual_radius,
        lipschitz,
        noise,
        batch,
        configs,
        envelope_gap,
    } = *inp;
    for (name, v) in [
        ("epsilon", epsilon),
        ("smoothness", smoothness),
        ("dual_radius", dual_radius),
        ("lipschitz", lipschitz),
        ("noise", noise),
        ("batch", batch),
        ("configs", configs),
        ("envelope_gap", envelope_gap),
    ] {
        if v <= 0.0 {
            return Err(Error::validation(format!("{name} must be positive")));
        }
    }
    let eta = epsilon.powi(6) / (smoothness.powi(3) * dual_radius.powi(2) * lipschitz);
    let gamma = epsilon.powi(2) / (smoothness * noise.powi(2));
    let noise_term = noise.powi(2) / batch;
    let gradient_complexity = configs
        * smoothness.powi(3)
        * (lipschitz.powi(2) + noise_term)
        * dual_radius.powi(2)
        * noise_term
        * envelope_gap
        / epsilon.powi(8);
    Ok(StepSizes {
        eta,
        gamma,
        gradient_complexity,
    })
}

/// Moreau-envelope probe parameters. The proximal subproblem
/// `min_{w'} psi(w') + |w' - w|^2 / (2 rho)` is solved by gradient descent;
/// it is strongly convex provided `rho < 1 / l_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoreauProbe {
    pub rho: f64,
    pub inner_iters: usize,
    pub inner_tol: f64,
    pub l_hat: f64,
}

impl MoreauProbe {
    /// Default probe at `rho = 1/(4 l_hat)`.
    pub fn for_smoothness(l_hat: f64) -> Self {
        MoreauProbe {
            rho: 1.0 / (4.0 * l_hat),
            inner_iters: 200_000,
            inner_tol: 1e-9,
            l_hat,
        }
    }
}

/// `(w - prox(w)) / rho`, the Moreau-envelope gradient of `psi` at `w`.
pub fn moreau_gradient<F>(psi: &F, w: &[f64], probe: &MoreauProbe) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if probe.rho <= 0.0 || probe.rho >= 1.0 / probe.l_hat {
        return Err(Error::validation(
            "rho must lie in (0, 1/l_hat) for a strongly convex subproblem",
        ));
    }
    let inv_rho = 1.0 / probe.rho;
    let step = 1.0 / (probe.l_hat + inv_rho);
    let mut cur = w.to_vec();
    let mut grad_norm = f64::INFINITY;
    for _ in 0..probe.inner_iters {
        let (_, mut g) = psi(&cur)?;
        for ((gi, &ci), &wi) in g.iter_mut().zip(&cur).zip(w) {
            *gi += (ci - wi) * inv_rho;
        }
        grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm <= probe.inner_tol {
            return Ok(w
                .iter()
                .zip(&cur)
                .map(|(&wi, &ci)| (wi - ci) * inv_rho)
                .collect());
        }
        for (c, gi) in cur.iter_mut().zip(&g) {
            *c -= step * gi;
        }
    }
    Err(Error::NonConvergence {
        what: "moreau proximal subproblem",
        iterations: probe.inner_iters,
        last_gap: grad_norm,
    })
}

/// Crude smoothness estimate: the largest gradient-Lipschitz ratio over
/// random probe pairs near `w0`.
pub fn estimate_smoothness<F>(
    psi: &F,
    w0: &[f64],
    radius: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut l_hat = 0.0f64;
    for _ in 0..pairs {
        let a: Vec<f64> = w0
            .iter()
            .map(|&v| v + radius * rng.random_range(-1.0..1.0))
            .collect();
        let b: Vec<f64> = w0
            .iter()
            .map(|&v| v + radius * rng.random_range(-1.0..1.0))
            .collect();
        let dist: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if dist < 1e-12 {
            continue;
        }
        let (_, ga) = psi(&a)?;
        let (_, gb) = psi(&b)?;
        let gdist: f64 = ga
            .iter()
            .zip(&gb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        l_hat = l_hat.max(gdist / dist);
    }
    if l_hat == 0.0 {
        return Err(Error::numerical("smoothness probe saw a flat gradient field"));
    }
    Ok(l_hat)
}

/// Summary of probed Moreau-gradient magnitudes: running average of the
/// squared norms over every prefix, and the best probed iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub prefix_averages: Vec<f64>,
    pub running_average: f64,
    pub best_iterate: usize,
    pub best_value: f64,
}

pub fn convergence_report(probes: &[(usize, f64)]) -> Result<ConvergenceReport> {
    if probes.len() < 2 {
        return Err(Error::validation(
            "need at least two stationarity probes to report convergence",
        ));
    }
    let mut prefix_averages = Vec::with_capacity(probes.len());
    let mut sum = 0.0;
    for (k, (_, v)) in probes.iter().enumerate() {
        sum += v;
        prefix_averages.push(sum / (k + 1) as f64);
    }
    let (best_iterate, best_value) = probes
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    Ok(ConvergenceReport {
        running_average: *prefix_averages.last().unwrap(),
        prefix_averages,
        best_iterate,
        best_value,
    })
}
