//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with the measured quantities (visible with --nocapture).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use radlab_cli::config::parse_pipeline;
use radlab_cli::experiment::{run_variant, Variant};
use radlab_cli::report::parse_comparison;

use radlab_core::bounds::verify::sample_probe_layer;
use radlab_core::bounds::{
    ce_bound, local_rad_fixed_point, mae_bound, ruhe_check, transferability_probe, tv_distance,
    verify_norm_growth, verify_sa_contraction, BoundParams, CeSumVariant, RhoVariant,
    TransferProbeConfig,
};
use radlab_core::endtoend::{run_endtoend, EndToEndConfig};
use radlab_core::error::Result;
use radlab_core::masking::{apply_mask, MaskGranularity, MaskTransform, MaskedData};
use radlab_core::matrix::{matmul, matmul_at, spectral_norm, DenseMatrix};
use radlab_core::minimax::{
    convergence_report, moreau_gradient, radreg_train, theoretical_step_sizes, IterationEval,
    MinimaxOracle, MoreauProbe, RadRegOracle, SgdaConfig, SgdaProbeConfig, StepSizeInputs,
};
use radlab_core::models::attention::TransformerEncoder;
use radlab_core::models::init::standard_normal;
use radlab_core::models::{Autoencoder, Batch, LinearMap, MlpClassifier, TransformerClassifier};
use radlab_core::pretrain::{build, pretrain, TrainConfig};
use radlab_core::radreg::{
    inner_sup_binary, inner_sup_multiclass, moment_matrix, radreg_loss_and_grad,
    sample_rademacher,
};
use radlab_core::rng::{stream_rng, substream_rng, Stream};
use radlab_core::synth::gen_synth;

const DEFAULT_EXPERIMENT: &str = include_str!("../../../configs/experiment-default.toml");

fn fd_check(label: &str, f: &dyn Fn(&[f64]) -> f64, w: &[f64], grad: &[f64]) {
    let h = 1e-5;
    for i in 0..w.len() {
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[i] += h;
        wm[i] -= h;
        let fd = (f(&wp) - f(&wm)) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-4);
        let rel = (grad[i] - fd).abs() / denom;
        assert!(
            rel < 1e-5,
            "{label}: coordinate {i}: analytic {} vs fd {fd}",
            grad[i]
        );
    }
}

fn random_labels(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Probe);
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

#[test]
fn criterion_01_gradient_fidelity() {
    let start = std::time::Instant::now();
    for draw in 0..20u64 {
        // MSE and logistic through the 2-layer MLP.
        let ce = build::ce_model(3, 4, 2, 3, 10 + draw).unwrap();
        let model = Autoencoder::Ce(ce.clone());
        let mut rng = substream_rng(20, Stream::Probe, draw);
        let x = Batch::Vectors(standard_normal(4, 3, &mut rng));
        let y = Batch::Vectors(standard_normal(4, 3, &mut rng));
        let w = model.params_flat();
        let (_, grad) = model.loss_and_grad_flat(&x, &y, None).unwrap();
        fd_check(
            "mlp mse",
            &|p| {
                let mut m = model.clone();
                m.set_params_flat(p).unwrap();
                m.loss_and_grad_flat(&x, &y, None).unwrap().0
            },
            &w,
            &grad,
        );

        let labels = random_labels(4, 30 + draw);
        let clf = MlpClassifier {
            encoder: ce.encoder.clone(),
            theta: standard_normal(1, 4, &mut rng).data().to_vec(),
        };
        let (_, enc_g, th_g) = {
            let Batch::Vectors(xv) = &x else { unreachable!() };
            clf.loss_and_grads(xv, &labels).unwrap()
        };
        let mut wc = Vec::new();
        for l in clf.encoder.layers() {
            wc.extend_from_slice(l.data());
        }
        wc.extend_from_slice(&clf.theta);
        let mut gc = Vec::new();
        for g in &enc_g {
            gc.extend_from_slice(g.data());
        }
        gc.extend_from_slice(&th_g);
        let shapes: Vec<(usize, usize)> = clf
            .encoder
            .layers()
            .iter()
            .map(|l| (l.rows(), l.cols()))
            .collect();
        let Batch::Vectors(xv) = x.clone() else { unreachable!() };
        fd_check(
            "mlp logistic",
            &move |p: &[f64]| {
                let mut off = 0;
                let mut layers = Vec::new();
                for &(r, c) in &shapes {
                    layers
                        .push(DenseMatrix::from_vec(r, c, p[off..off + r * c].to_vec()).unwrap());
                    off += r * c;
                }
                MlpClassifier {
                    encoder: radlab_core::models::mlp::MlpEncoder::new(layers).unwrap(),
                    theta: p[off..].to_vec(),
                }
                .loss_and_grads(&xv, &labels)
                .unwrap()
                .0
            },
            &wc,
            &gc,
        );

        // MSE and logistic through the 1-layer attention stack.
        let mae = build::mae_model(3, 2, 4, 1, 3, 0.25, 0.25, 40 + draw).unwrap();
        let model = Autoencoder::Mae(mae.clone());
        let xs: Vec<DenseMatrix> = (0..2).map(|_| standard_normal(3, 3, &mut rng)).collect();
        let ys: Vec<DenseMatrix> = (0..2).map(|_| standard_normal(3, 3, &mut rng)).collect();
        let (xb, yb) = (Batch::Patches(xs.clone()), Batch::Patches(ys));
        let w = model.params_flat();
        let (_, grad) = model.loss_and_grad_flat(&xb, &yb, None).unwrap();
        fd_check(
            "sa mse",
            &|p| {
                let mut m = model.clone();
                m.set_params_flat(p).unwrap();
                m.loss_and_grad_flat(&xb, &yb, None).unwrap().0
            },
            &w,
            &grad,
        );

        let labels = random_labels(2, 50 + draw);
        let clf = TransformerClassifier {
            encoder: mae.encoder.clone(),
            theta: standard_normal(1, 3, &mut rng).data().to_vec(),
        };
        let (_, enc_g, th_g) = clf.loss_and_grads(&xs, &labels).unwrap();
        let mut wc = Vec::new();
        use radlab_core::models::TrainableRepresentation;
        clf.encoder.write_params(&mut wc);
        wc.extend_from_slice(&clf.theta);
        let mut gc = Vec::new();
        for g in &enc_g {
            for t in [&g.w_v, &g.w_k, &g.w_q, &g.w_fc1, &g.w_fc2] {
                gc.extend_from_slice(t.data());
            }
        }
        gc.extend_from_slice(&th_g);
        let enc = clf.encoder.clone();
        let xs2 = xs.clone();
        fd_check(
            "sa logistic",
            &move |p: &[f64]| {
                let mut e = enc.clone();
                let n = e.param_count();
                e.read_params(&p[..n]).unwrap();
                TransformerClassifier {
                    encoder: e,
                    theta: p[n..].to_vec(),
                }
                .loss_and_grads(&xs2, &labels)
                .unwrap()
                .0
            },
            &wc,
            &gc,
        );

        // Full regularized composite.
        let model = Autoencoder::Ce(build::ce_model(3, 4, 2, 3, 60 + draw).unwrap());
        let xb = Batch::Vectors(standard_normal(5, 3, &mut rng));
        let data = MaskedData {
            input: xb.clone(),
            target: xb.clone(),
            masked: vec![Vec::new(); 5],
        };
        let down = Batch::Vectors(standard_normal(4, 3, &mut rng));
        let signs = sample_rademacher(3, 4, 1, 70 + draw).unwrap();
        let duals: Vec<DenseMatrix> = (0..3)
            .map(|_| standard_normal(1, 4, &mut rng).scale(0.5))
            .collect();
        let w = model.params_flat();
        let eval =
            radreg_loss_and_grad(&model, &duals, &data, false, &down, &signs, 0.7).unwrap();
        fd_check(
            "radreg composite",
            &|p| {
                let mut m = model.clone();
                m.set_params_flat(p).unwrap();
                radreg_loss_and_grad(&m, &duals, &data, false, &down, &signs, 0.7)
                    .unwrap()
                    .loss
            },
            &w,
            &eval.grad_w,
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    println!("PASS criterion 1: gradient fidelity at 20 draws per composite in {elapsed:?}");
}

fn ascent_oracle(gradient: &DenseMatrix, radius: f64, steps: usize) -> f64 {
    let mut v = DenseMatrix::zeros(gradient.cols(), gradient.rows());
    for _ in 0..steps {
        v.axpy(0.1, &gradient.transpose()).unwrap();
        let norm = v.frobenius_norm();
        if norm > radius {
            v = v.scale(radius / norm);
        }
    }
    v.dot(&gradient.transpose())
}

#[test]
fn criterion_02_inner_sup_closed_form_vs_iterative() {
    let mut rng = stream_rng(2, Stream::Probe);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let radius = rng.random_range(0.5..3.0);
        let gap = if trial % 2 == 0 {
            let reps = standard_normal(6, 4, &mut rng);
            let sigma: Vec<f64> = (0..6)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let (value, _) = inner_sup_binary(&reps, &sigma, radius).unwrap();
            let m = moment_matrix(&reps, &DenseMatrix::from_vec(6, 1, sigma).unwrap()).unwrap();
            (value - ascent_oracle(&m, radius, 500)).abs()
        } else {
            let m = standard_normal(4, 3, &mut rng).scale(0.5);
            let (value, _) = inner_sup_multiclass(&m, radius).unwrap();
            (value - ascent_oracle(&m, radius, 500)).abs()
        };
        worst = worst.max(gap);
        assert!(gap < 1e-3, "trial {trial}: gap {gap}");
    }
    println!("PASS criterion 2: closed-form vs 500-step ascent on 50 instances, worst gap {worst:.2e}");
}

#[test]
fn criterion_03_attention_inequality_sweeps() {
    let mut worst_contraction: f64 = 0.0;
    let mut worst_growth: f64 = 0.0;
    for trial in 0..100u64 {
        let layer = sample_probe_layer(4, 2, 5, 0.05, 0.05, 300 + trial).unwrap();
        let rep = verify_sa_contraction(&layer, 4, 1, 600 + trial).unwrap();
        assert_eq!(rep.violations, 0, "contraction violated at trial {trial}");
        worst_contraction = worst_contraction.max(rep.worst_ratio);

        let layers = vec![
            sample_probe_layer(4, 2, 5, 0.1, 0.1, 900 + trial).unwrap(),
            sample_probe_layer(4, 2, 5, 0.1, 0.1, 1200 + trial).unwrap(),
        ];
        let enc = TransformerEncoder::new(layers, 4).unwrap();
        let rep = verify_norm_growth(&enc, 1, 1500 + trial).unwrap();
        assert_eq!(rep.violations, 0, "norm growth violated at trial {trial}");
        worst_growth = worst_growth.max(rep.worst_ratio);
    }
    println!(
        "PASS criterion 3: contraction and norm growth on 100 draws each, worst ratios {worst_contraction:.4} / {worst_growth:.4}"
    );
}

#[test]
fn criterion_04_fixed_point_identity() {
    let mut rng = stream_rng(4, Stream::Probe);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = rng.random_range(0.1..10.0);
        let c = rng.random_range(0.1..100.0);
        let b = rng.random_range(0.1..10.0);
        let n = rng.random_range(10.0..1e6);
        let fp = local_rad_fixed_point(h, c, b, n).unwrap();
        let res = ((fp.phi_at_r_star - fp.r_star) / fp.r_star).abs();
        worst = worst.max(res);
        assert!(res < 1e-10, "residual {res}");
    }
    let hand = local_rad_fixed_point(1.0, 1.0, 1.0, 100.0).unwrap();
    assert!(
        (hand.r_star - 1.92181).abs() < 1e-4,
        "hand case r* = {}",
        hand.r_star
    );
    println!(
        "PASS criterion 4: fixed-point residual < 1e-10 on 100 draws (worst {worst:.2e}), hand case r* = {:.6}",
        hand.r_star
    );
}

#[test]
fn criterion_05_tv_and_trace_inequality() {
    let mut rng = stream_rng(5, Stream::Probe);
    for trial in 0..100 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        };
        let p = draw(&mut rng);
        let q = draw(&mut rng);
        let tv = tv_distance(&p, &q).unwrap();
        // Independent route: the largest probability gap over all events.
        let mut sup = 0.0f64;
        for mask in 0u32..16 {
            let gap: f64 = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| p[i] - q[i])
                .sum();
            sup = sup.max(gap.abs());
        }
        assert!((tv - sup).abs() < 1e-12, "trial {trial}: {tv} vs {sup}");

        let ma = standard_normal(4, 4, &mut rng);
        let mb = standard_normal(4, 4, &mut rng);
        let rep = ruhe_check(&matmul_at(&ma, &ma).unwrap(), &matmul_at(&mb, &mb).unwrap())
            .unwrap();
        assert!(rep.ok, "trial {trial}: {rep:?}");
    }
    println!("PASS criterion 5: tv = half-L1 on 100 pairs exactly; trace bounds on 100 psd pairs");
}

fn random_bound_params(rng: &mut ChaCha8Rng, layers: usize) -> BoundParams {
    BoundParams {
        w_caps: (0..layers).map(|_| rng.random_range(0.5..2.0)).collect(),
        b_caps: (0..layers).map(|_| rng.random_range(0.5..3.0)).collect(),
        z_norm: rng.random_range(0.5..5.0),
        x_sq_sum: rng.random_range(1.0..50.0),
        x_star: rng.random_range(0.5..3.0),
        dim: rng.random_range(2.0..32.0),
        width: rng.random_range(4.0..64.0),
        patches: rng.random_range(2.0..8.0),
        attn_dim: rng.random_range(1.0..8.0),
        alpha1: rng.random_range(0.01..0.3),
        alpha2: rng.random_range(0.01..0.3),
        n: rng.random_range(8.0..128.0),
        big_n: rng.random_range(64.0..4096.0),
        confidence: rng.random_range(0.01..0.5),
        smoothness: rng.random_range(0.5..4.0),
        loss_bound_pre: rng.random_range(0.5..8.0),
        lipschitz: rng.random_range(0.5..2.0),
        loss_bound_down: rng.random_range(0.5..2.0),
        head_radius: rng.random_range(0.5..8.0),
        tv: rng.random_range(0.0..0.3),
        transfer_coeff: 1.0,
        covering_mult: 1.0,
    }
}

#[test]
fn criterion_06_bound_monotonicity() {
    let mut rng = stream_rng(6, Stream::Probe);
    let ce = |p: &BoundParams| ce_bound(p, CeSumVariant::Appendix).unwrap().total;
    let mae = |p: &BoundParams| mae_bound(p, RhoVariant::Appendix).unwrap().total;
    for point in 0..20 {
        let base = random_bound_params(&mut rng, 2);
        for (name, eval) in [("ce", &ce as &dyn Fn(&BoundParams) -> f64), ("mae", &mae)] {
            // Increasing sweeps in every cap: totals must not decrease.
            for coord in 0..4 {
                let mut prev = f64::NEG_INFINITY;
                for k in 0..20 {
                    let mut p = base.clone();
                    let scale = 1.0 + 0.1 * k as f64;
                    if coord < 2 {
                        p.w_caps[coord] *= scale;
                    } else {
                        p.b_caps[coord - 2] *= scale;
                    }
                    let total = eval(&p);
                    assert!(
                        total >= prev - 1e-12 * prev.abs().max(1.0),
                        "{name} point {point}: cap {coord} step {k} decreased ({prev} -> {total})"
                    );
                    prev = total;
                }
            }
            // Increasing sweeps in n and N: totals must not increase.
            for grow_n in [true, false] {
                let mut prev = f64::INFINITY;
                for k in 0..20 {
                    let mut p = base.clone();
                    let scale = 1.0 + 0.35 * k as f64;
                    if grow_n {
                        p.n *= scale;
                    } else {
                        p.big_n *= scale;
                    }
                    let total = eval(&p);
                    assert!(
                        total <= prev + 1e-12 * prev.abs().max(1.0),
                        "{name} point {point}: sample sweep (n = {grow_n}) step {k} increased"
                    );
                    prev = total;
                }
            }
        }
    }
    // Full confidence removes the confidence term exactly.
    let mut p = random_bound_params(&mut rng, 2);
    p.confidence = 1.0;
    assert_eq!(ce_bound(&p, CeSumVariant::Appendix).unwrap().confidence, 0.0);
    assert_eq!(mae_bound(&p, RhoVariant::Appendix).unwrap().confidence, 0.0);
    println!("PASS criterion 6: bound totals monotone over 20-point sweeps; confidence vanishes at nu = 1");
}

#[test]
fn criterion_07_moreau_diagnostics() {
    // Analytic quadratic: envelope gradient 0.8 w at rho = 1/4.
    let psi = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        Ok((0.5 * w.iter().map(|v| v * v).sum::<f64>(), w.to_vec()))
    };
    let probe = MoreauProbe {
        rho: 0.25,
        inner_iters: 200_000,
        inner_tol: 1e-12,
        l_hat: 1.0,
    };
    let g = moreau_gradient(&psi, &[1.0, 0.0], &probe).unwrap();
    assert!((g[0] - 0.8).abs() < 1e-6 && g[1].abs() < 1e-9, "{g:?}");

    // Nonconvex cross-check against finite differences of the envelope,
    // evaluated by an independent ternary-search minimizer.
    let cosine = |w: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((w[0].cos(), vec![-w[0].sin()])) };
    let probe = MoreauProbe {
        rho: 0.1,
        inner_iters: 200_000,
        inner_tol: 1e-12,
        l_hat: 1.0,
    };
    let got = moreau_gradient(&cosine, &[0.3], &probe).unwrap()[0];
    let envelope = |x: f64| {
        let obj = |y: f64| y.cos() + (y - x) * (y - x) / 0.2;
        let (mut lo, mut hi) = (x - 2.0, x + 2.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if obj(m1) < obj(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        obj(0.5 * (lo + hi))
    };
    let h = 1e-5;
    let fd = (envelope(0.3 + h) - envelope(0.3 - h)) / (2.0 * h);
    let rel = (got - fd).abs() / fd.abs();
    assert!(rel < 1e-3, "moreau {got} vs envelope fd {fd}");
    println!("PASS criterion 7: quadratic envelope gradient 0.8w to 1e-6; cosine cross-check rel err {rel:.2e}");
}

/// Quadratic-plus-bilinear toy: loss |w - w_ref|^2/2 with couplings
/// v^T A_j w over unit-ball duals.
struct ToyProblem {
    couplings: Vec<DenseMatrix>,
    w_ref: Vec<f64>,
}

impl ToyProblem {
    fn apply(a: &DenseMatrix, w: &[f64]) -> [f64; 2] {
        [
            a.get(0, 0) * w[0] + a.get(0, 1) * w[1],
            a.get(1, 0) * w[0] + a.get(1, 1) * w[1],
        ]
    }
}

impl MinimaxOracle for ToyProblem {
    fn primal_dim(&self) -> usize {
        2
    }
    fn num_duals(&self) -> usize {
        self.couplings.len()
    }
    fn dual_shape(&self) -> (usize, usize) {
        (1, 2)
    }
    fn evaluate(
        &mut self,
        w: &[f64],
        duals: &[DenseMatrix],
        lambda: f64,
        _rng_pre: &mut ChaCha8Rng,
        _rng_down: &mut ChaCha8Rng,
    ) -> Result<IterationEval> {
        let b = self.couplings.len() as f64;
        let mut grad: Vec<f64> = w.iter().zip(&self.w_ref).map(|(a, r)| a - r).collect();
        let mut loss: f64 = grad.iter().map(|g| g * g).sum::<f64>() * 0.5;
        let mut reg_values = Vec::new();
        let mut dual_grads = Vec::new();
        for (a, v) in self.couplings.iter().zip(duals) {
            let aw = Self::apply(a, w);
            let val = v.get(0, 0) * aw[0] + v.get(0, 1) * aw[1];
            reg_values.push(val);
            loss += lambda / b * val;
            grad[0] += lambda / b * (a.get(0, 0) * v.get(0, 0) + a.get(1, 0) * v.get(0, 1));
            grad[1] += lambda / b * (a.get(0, 1) * v.get(0, 0) + a.get(1, 1) * v.get(0, 1));
            dual_grads.push(DenseMatrix::from_vec(1, 2, vec![aw[0], aw[1]]).unwrap());
        }
        Ok(IterationEval {
            loss,
            grad_w: grad,
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
        let b = self.couplings.len() as f64;
        let mut grad: Vec<f64> = w.iter().zip(&self.w_ref).map(|(a, r)| a - r).collect();
        let mut value: f64 = grad.iter().map(|g| g * g).sum::<f64>() * 0.5;
        for a in &self.couplings {
            let aw = Self::apply(a, w);
            let norm = (aw[0] * aw[0] + aw[1] * aw[1]).sqrt();
            value += lambda / b * radius * norm;
            if norm > 0.0 {
                grad[0] +=
                    lambda / b * radius * (a.get(0, 0) * aw[0] + a.get(1, 0) * aw[1]) / norm;
                grad[1] +=
                    lambda / b * radius * (a.get(0, 1) * aw[0] + a.get(1, 1) * aw[1]) / norm;
            }
        }
        Ok((value, grad))
    }
}

#[test]
fn criterion_08_sgda_convergence_on_the_toy_problem() {
    let start = std::time::Instant::now();
    let steps = theoretical_step_sizes(&StepSizeInputs {
        epsilon: 0.3,
        smoothness: 1.0,
        dual_radius: 1.0,
        lipschitz: 2.0,
        noise: 1.0,
        batch: 1.0,
        configs: 2.0,
        envelope_gap: 1.0,
    })
    .unwrap();
    for seed in [11u64, 12, 13] {
        let mut rng = stream_rng(seed, Stream::Probe);
        let couplings: Vec<DenseMatrix> = (0..2)
            .map(|_| {
                let raw = standard_normal(2, 2, &mut rng);
                let n = spectral_norm(&raw, 1e-10, 100_000).unwrap();
                raw.scale(1.0 / n)
            })
            .collect();
        let mut toy = ToyProblem {
            couplings,
            w_ref: vec![3.0 + seed as f64 * 0.1, -2.0],
        };
        let cfg = SgdaConfig {
            eta: steps.eta,
            gamma: steps.gamma,
            lambda: 1.0,
            iterations: 5000,
            dual_radius: Some(1.0),
            seed,
            probe: Some(SgdaProbeConfig {
                cadence: 50,
                probe: MoreauProbe {
                    rho: 0.125,
                    inner_iters: 200_000,
                    inner_tol: 1e-8,
                    l_hat: 2.0,
                },
                radius: 1.0,
            }),
        };
        let run = radreg_train(&mut toy, vec![0.2, 0.1], &cfg).unwrap();
        let report = convergence_report(&run.trace.moreau_sq).unwrap();
        let at50 = run
            .trace
            .moreau_sq
            .iter()
            .position(|(t, _)| *t == 50)
            .expect("probe at iteration 50");
        assert!(
            report.running_average < report.prefix_averages[at50],
            "seed {seed}: running average {} did not drop below its value {} at iteration 50",
            report.running_average,
            report.prefix_averages[at50]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}");
    println!(
        "PASS criterion 8: toy minimax running average strictly decreases on 3/3 seeds in {elapsed:?}"
    );
}

#[test]
fn criterion_09_radreg_effect_with_paired_seeds() {
    let start = std::time::Instant::now();
    let cfg = parse_pipeline(DEFAULT_EXPERIMENT).unwrap();
    let seeds = cfg.experiment.as_ref().unwrap().seeds.clone();
    assert_eq!(seeds.len(), 3);

    let mut wins = 0;
    for &seed in &seeds {
        let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth))).unwrap();
        let none = run_variant(&cfg, &task, Variant::None, seed).unwrap();
        let radreg = run_variant(&cfg, &task, Variant::RadReg, seed).unwrap();
        println!(
            "  seed {seed}: complexity estimate {} (none) vs {} (radreg)",
            none.row.rad_est, radreg.row.rad_est
        );
        if radreg.row.rad_est <= none.row.rad_est {
            wins += 1;
        }

        // With lambda forced to zero the regularized run must reproduce
        // the unregularized trajectory bit for bit.
        let mut zero = cfg.clone();
        zero.radreg.as_mut().unwrap().lambda = 0.0;
        let none_z = run_variant(&zero, &task, Variant::None, seed).unwrap();
        let radreg_z = run_variant(&zero, &task, Variant::RadReg, seed).unwrap();
        assert_eq!(
            none_z.trace.loss, radreg_z.trace.loss,
            "seed {seed}: lambda = 0 loss trace differs"
        );
        assert_eq!(
            none_z.final_params, radreg_z.final_params,
            "seed {seed}: lambda = 0 final weights differ"
        );
        assert_eq!(none_z.row, {
            let mut r = radreg_z.row.clone();
            r.variant = none_z.row.variant.clone();
            r
        });
    }
    assert!(wins >= 2, "regularized estimate larger in {} of 3 seeds", 3 - wins);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    println!(
        "PASS criterion 9: complexity estimate reduced in {wins}/3 paired seeds; lambda = 0 bit-exact; {elapsed:?}"
    );
}

#[test]
fn criterion_10_transferability_probe() {
    // Identical encoders: all three quantities vanish.
    let mut rng = stream_rng(10, Stream::Probe);
    let n = 48;
    let x = standard_normal(n, 4, &mut rng);
    let w: Vec<f64> = {
        let raw = standard_normal(1, 4, &mut rng);
        let norm = raw.frobenius_norm();
        raw.data().iter().map(|v| v / norm).collect()
    };
    let labels: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let data = Batch::Vectors(x);
    let p = standard_normal(4, 4, &mut rng)
        .add(&DenseMatrix::identity(4).scale(2.0))
        .unwrap();
    let enc = LinearMap(p.clone());
    let same = transferability_probe(&enc, &enc, &data, &labels, &TransferProbeConfig::default())
        .unwrap();
    assert!(same.delta_ft.abs() < 1e-9, "delta_ft {}", same.delta_ft);
    assert!(same.delta_pt.abs() < 1e-9, "delta_pt {}", same.delta_pt);
    assert!(
        same.lambda_schur.max_abs() < 1e-9,
        "lambda {}",
        same.lambda_schur.max_abs()
    );

    // Planted family: project out a direction rotating toward the label
    // rule across ten magnitudes; the ratio must stay under the ceiling.
    let mut ratios = Vec::new();
    for k in 0..10 {
        let angle = (k as f64 + 0.5) / 10.0 * std::f64::consts::FRAC_PI_2;
        // Unit direction interpolating between an off-label axis and w.
        let mut v = vec![0.0; 4];
        let mut off = vec![0.0; 4];
        off[1] = 1.0;
        for i in 0..4 {
            v[i] = angle.cos() * off[i] + angle.sin() * w[i];
        }
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
        let out = transferability_probe(
            &h_hat,
            &enc,
            &data,
            &labels,
            &TransferProbeConfig::default(),
        )
        .unwrap();
        assert!(
            out.bound_ok,
            "sweep point {k}: ratio {} exceeds ceiling {}",
            out.ratio, out.ceiling
        );
        assert!(out.ratio.is_finite());
        ratios.push(out.ratio);
    }
    println!(
        "PASS criterion 10: identical encoders < 1e-9; sweep ratios {:?} all under the ceiling",
        ratios.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_11_endtoend_drift() {
    // Reference configuration: m = 256, L = 2, N = 50, n = 10.
    let mut rng = stream_rng(2026, Stream::Probe);
    let z = Batch::Vectors(standard_normal(50, 8, &mut rng));
    let data = apply_mask(
        &z,
        &MaskTransform {
            mask_ratio: 0.25,
            fill_value: 0.0,
            seed: 2026,
            granularity: MaskGranularity::Coordinate,
        },
    )
    .unwrap();
    let x = standard_normal(10, 8, &mut rng);
    let y: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let cfg = EndToEndConfig {
        input_dim: 8,
        hidden: 256,
        encoder_depth: 2,
        pretrain_iters: 40,
        finetune_iters: 40,
        eta_multiplier: 1.0,
        gamma_multiplier: 1.0,
        head_step: 1.0,
        seed: 2026,
    };
    let report = run_endtoend(&cfg, &data, &x, &y).unwrap();
    assert!(report.diverged_at.is_none());

    // Drift starts at exactly zero.
    for t in &report.traces {
        assert_eq!(t.fro[0], 0.0, "{}", t.name);
        assert_eq!(t.spectral[0], 0.0, "{}", t.name);
    }

    // One-step identity: drift(1) = eta |grad at init|_F.
    let mut one_step = cfg.clone();
    one_step.pretrain_iters = 1;
    one_step.finetune_iters = 0;
    let short = run_endtoend(&one_step, &data, &x, &y).unwrap();
    {
        use radlab_core::models::init::gaussian_row_init;
        use radlab_core::models::losses::CeModel;
        use radlab_core::models::mlp::MlpEncoder;
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
        let (_, grad) = model.loss_and_grad_flat(&data.input, &data.target, None).unwrap();
        let mut off = 0;
        let Autoencoder::Ce(ce) = &model else { unreachable!() };
        for (l, wmat) in ce.encoder.layers().iter().enumerate() {
            let nparams = wmat.data().len();
            let gnorm: f64 = grad[off..off + nparams].iter().map(|g| g * g).sum::<f64>().sqrt();
            off += nparams;
            let want = cfg.eta() * gnorm;
            let got = short.traces[l].fro[1];
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1.0),
                "layer {l}: one-step drift {got} vs eta |grad| {want}"
            );
        }
    }

    // Golden regression values from the first reference run.
    let ft_first = report.finetune_loss[0];
    let ft_last = *report.finetune_loss.last().unwrap();
    assert!(ft_last < ft_first, "fine-tune loss {ft_first} -> {ft_last}");
    let max_drift = report.traces[..2]
        .iter()
        .map(|t| t.fro[cfg.pretrain_iters])
        .fold(0.0f64, f64::max);
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    assert!(rel(report.pretrain_loss[0], 7.940881850134699) < 1e-6);
    assert!(rel(ft_first, 1.5107197599945095) < 1e-6);
    assert!(rel(ft_last, 0.03072869003620148) < 1e-6);
    assert!(rel(max_drift, 1.361798485306787) < 1e-6);
    for t in &report.traces {
        assert!(t.fro.iter().chain(&t.spectral).all(|v| v.is_finite()));
    }
    println!(
        "PASS criterion 11: drift zero at t=0, one-step identity to 1e-10, reference run matches goldens (max encoder drift {max_drift:.6})"
    );
}

#[test]
fn criterion_12_whole_pipeline_determinism() {
    let exe = env!("CARGO_BIN_EXE_radlab");
    let dir = std::env::temp_dir().join(format!("radlab-determinism-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("tiny.toml");
    std::fs::write(
        &config_path,
        r#"
[task]
pretrain = 12
downstream = 8
test = 8
dim = 4
c1 = 0.2
c2 = 0.2

[model]
kind = "ce"
hidden = 6
depth = 1

[mask]
ratio = 0.25

[pretrain]
learning_rate = 0.02
iterations = 15

[finetune]
learning_rate = 0.5
iterations = 20
head_radius = 3.0

[radreg]
lambda = 0.2
configs = 3
gamma = 0.05
dual_radius = 3.0
estimate_configs = 16

[experiment]
seeds = [7]
lambda_l2 = 0.001
"#,
    )
    .unwrap();

    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(exe)
            .args([
                "experiment",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (out_a, out_b) = (dir.join("a"), dir.join("b"));
    run(&out_a);
    run(&out_b);

    let mut files_checked = 0;
    let mut walk = vec![out_a.clone()];
    while let Some(p) = walk.pop() {
        for entry in std::fs::read_dir(&p).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                walk.push(path);
            } else {
                let rel = path.strip_prefix(&out_a).unwrap();
                let twin = out_b.join(rel);
                let a = std::fs::read(&path).unwrap();
                let b = std::fs::read(&twin).unwrap_or_default();
                assert_eq!(a, b, "output {} differs between runs", rel.display());
                files_checked += 1;
            }
        }
    }
    assert!(files_checked >= 3, "expected several output files");
    let _ = std::fs::remove_dir_all(&dir);
    println!(
        "PASS criterion 12: {files_checked} output files byte-identical across two seeded runs"
    );
}

/// Supporting check for the minimax contract: with the regularizer off and
/// no auxiliary terms, the minimax loop is the plain pre-training loop.
#[test]
fn sgda_with_zero_lambda_matches_plain_pretraining_bitwise() {
    let cfg = parse_pipeline(DEFAULT_EXPERIMENT).unwrap();
    let seed = 5u64;
    let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth))).unwrap();
    let data = apply_mask(&task.pretrain, &cfg.mask.to_transform(seed, 1)).unwrap();

    let mut plain = Autoencoder::Ce(
        build::ce_model(cfg.task.dim, cfg.model.hidden, cfg.model.depth, cfg.task.dim, seed)
            .unwrap(),
    );
    let iters = 60;
    let trace = pretrain(
        &mut plain,
        &TrainConfig {
            learning_rate: cfg.pretrain.learning_rate,
            iterations: iters,
            batch_size: None,
            seed,
        },
        &data,
        false,
    )
    .unwrap();

    let model = Autoencoder::Ce(
        build::ce_model(cfg.task.dim, cfg.model.hidden, cfg.model.depth, cfg.task.dim, seed)
            .unwrap(),
    );
    let w0 = model.params_flat();
    let mut oracle = RadRegOracle {
        model,
        pretrain: data,
        masked_only: false,
        downstream_x: task.downstream_x.clone(),
        signs: sample_rademacher(4, task.downstream_x.len(), 1, seed).unwrap(),
        batch_size: None,
        aux: None,
        l2_weight: 0.0,
    };
    let run = radreg_train(
        &mut oracle,
        w0,
        &SgdaConfig {
            eta: cfg.pretrain.learning_rate,
            gamma: 0.05,
            lambda: 0.0,
            iterations: iters,
            dual_radius: Some(5.0),
            seed,
            probe: None,
        },
    )
    .unwrap();

    assert_eq!(&trace[..iters], &run.trace.loss[..], "loss trajectories differ");
    assert_eq!(plain.params_flat(), run.final_w, "final weights differ");
    println!("PASS: minimax loop with lambda = 0 equals plain gradient descent bit for bit");
}
