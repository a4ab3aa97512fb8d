//! The `verify` command: randomized property sweeps over every numerical
//! claim the library relies on, with pass counts per suite.

use rand::Rng;

use radlab_core::bounds::{
    local_rad_fixed_point, ruhe_check, tv_distance, verify_norm_growth, verify_sa_contraction,
};
use radlab_core::bounds::verify::sample_probe_layer;
use radlab_core::error::Result;
use radlab_core::masking::MaskedData;
use radlab_core::matrix::{matmul_at, DenseMatrix};
use radlab_core::minimax::{moreau_gradient, MoreauProbe};
use radlab_core::models::attention::TransformerEncoder;
use radlab_core::models::init::standard_normal;
use radlab_core::models::{Autoencoder, Batch};
use radlab_core::pretrain::build;
use radlab_core::radreg::{
    inner_sup_binary, inner_sup_multiclass, moment_matrix, radreg_loss_and_grad,
    sample_rademacher,
};
use radlab_core::rng::{stream_rng, substream_rng, Stream};

pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

/// Runs every suite; returns one line of results per suite.
pub fn run_all(seed: u64) -> Result<Vec<SuiteResult>> {
    Ok(vec![
        gradient_suite(seed)?,
        contraction_suite(seed)?,
        norm_growth_suite(seed)?,
        tv_suite(seed)?,
        ruhe_suite(seed)?,
        fixed_point_suite(seed)?,
        inner_sup_suite(seed)?,
        moreau_suite()?,
    ])
}

fn gradient_suite(seed: u64) -> Result<SuiteResult> {
    let mut passed = 0;
    let total = 6;
    for draw in 0..total {
        let model = if draw % 2 == 0 {
            Autoencoder::Ce(build::ce_model(3, 4, 2, 3, seed.wrapping_add(draw as u64))?)
        } else {
            Autoencoder::Mae(build::mae_model(
                3,
                2,
                4,
                1,
                3,
                0.2,
                0.2,
                seed.wrapping_add(draw as u64),
            )?)
        };
        let mut rng = substream_rng(seed, Stream::Probe, 10 + draw as u64);
        let (x, down) = if draw % 2 == 0 {
            (
                Batch::Vectors(standard_normal(4, 3, &mut rng)),
                Batch::Vectors(standard_normal(3, 3, &mut rng)),
            )
        } else {
            (
                Batch::Patches((0..3).map(|_| standard_normal(3, 3, &mut rng)).collect()),
                Batch::Patches((0..2).map(|_| standard_normal(3, 3, &mut rng)).collect()),
            )
        };
        let data = MaskedData {
            input: x.clone(),
            target: x.clone(),
            masked: vec![Vec::new(); x.len()],
        };
        let signs = sample_rademacher(2, down.len(), 1, seed.wrapping_add(99))?;
        let duals: Vec<DenseMatrix> = (0..2)
            .map(|_| standard_normal(1, model.rep_dim(), &mut rng).scale(0.5))
            .collect();
        let lambda = 0.7;
        let w = model.params_flat();
        let eval = radreg_loss_and_grad(&model, &duals, &data, false, &down, &signs, lambda)?;

        let mut ok = true;
        let h = 1e-5;
        for i in (0..w.len()).step_by(7) {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let f = |p: &[f64]| -> Result<f64> {
                let mut m = model.clone();
                m.set_params_flat(p)?;
                Ok(radreg_loss_and_grad(&m, &duals, &data, false, &down, &signs, lambda)?.loss)
            };
            let fd = (f(&wp)? - f(&wm)?) / (2.0 * h);
            let denom = eval.grad_w[i].abs().max(fd.abs()).max(1e-4);
            if (eval.grad_w[i] - fd).abs() / denom >= 1e-5 {
                ok = false;
            }
        }
        if ok {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: "gradient finite differences",
        passed,
        total,
    })
}

fn contraction_suite(seed: u64) -> Result<SuiteResult> {
    let layer = sample_probe_layer(4, 2, 5, 0.05, 0.05, seed)?;
    let rep = verify_sa_contraction(&layer, 4, 100, seed)?;
    Ok(SuiteResult {
        name: "attention contraction",
        passed: rep.trials - rep.violations,
        total: rep.trials,
    })
}

fn norm_growth_suite(seed: u64) -> Result<SuiteResult> {
    let layers = vec![
        sample_probe_layer(4, 2, 5, 0.1, 0.1, seed.wrapping_add(1))?,
        sample_probe_layer(4, 2, 5, 0.1, 0.1, seed.wrapping_add(2))?,
    ];
    let enc = TransformerEncoder::new(layers, 4)?;
    let rep = verify_norm_growth(&enc, 100, seed)?;
    Ok(SuiteResult {
        name: "attention norm growth",
        passed: rep.trials - rep.violations,
        total: rep.trials,
    })
}

/// The supremum over events of the probability gap, by enumerating all
/// subsets of a small support; must equal half the L1 distance.
fn tv_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut passed = 0;
    let total = 100;
    for _ in 0..total {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        };
        let p = draw(&mut rng);
        let q = draw(&mut rng);
        let tv = tv_distance(&p, &q)?;
        let mut sup = 0.0f64;
        for mask in 0u32..16 {
            let gap: f64 = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| p[i] - q[i])
                .sum();
            sup = sup.max(gap.abs());
        }
        if (tv - sup).abs() < 1e-12 {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: "total variation = half L1",
        passed,
        total,
    })
}

fn ruhe_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed.wrapping_add(7), Stream::Probe);
    let mut passed = 0;
    let total = 100;
    for _ in 0..total {
        let ma = standard_normal(4, 4, &mut rng);
        let mb = standard_normal(4, 4, &mut rng);
        let a = matmul_at(&ma, &ma)?;
        let b = matmul_at(&mb, &mb)?;
        if ruhe_check(&a, &b)?.ok {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: "trace eigenvalue bounds",
        passed,
        total,
    })
}

fn fixed_point_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed.wrapping_add(8), Stream::Probe);
    let mut passed = 0;
    let total = 100;
    for _ in 0..total {
        let h = rng.random_range(0.1..10.0);
        let c = rng.random_range(0.1..100.0);
        let b = rng.random_range(0.1..10.0);
        let n = rng.random_range(10.0..1e6);
        let fp = local_rad_fixed_point(h, c, b, n)?;
        if ((fp.phi_at_r_star - fp.r_star) / fp.r_star).abs() < 1e-10 {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: "local complexity fixed point",
        passed,
        total,
    })
}

fn inner_sup_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed.wrapping_add(9), Stream::Probe);
    let mut passed = 0;
    let total = 50;
    for trial in 0..total {
        let radius = rng.random_range(0.5..3.0);
        let gap = if trial % 2 == 0 {
            let reps = standard_normal(6, 4, &mut rng);
            let sigma: Vec<f64> = (0..6)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let (value, _) = inner_sup_binary(&reps, &sigma, radius)?;
            let sig = DenseMatrix::from_vec(6, 1, sigma)?;
            let m = moment_matrix(&reps, &sig)?;
            (value - ascent(&m, radius, 500)).abs()
        } else {
            let m = standard_normal(4, 3, &mut rng).scale(0.5);
            let (value, _) = inner_sup_multiclass(&m, radius)?;
            (value - ascent(&m, radius, 500)).abs()
        };
        if gap < 1e-3 {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: "inner supremum closed form vs ascent",
        passed,
        total,
    })
}

fn ascent(gradient: &DenseMatrix, radius: f64, steps: usize) -> f64 {
    let mut v = DenseMatrix::zeros(gradient.cols(), gradient.rows());
    for _ in 0..steps {
        v.axpy(0.1, &gradient.transpose()).expect("shapes match");
        let norm = v.frobenius_norm();
        if norm > radius {
            v = v.scale(radius / norm);
        }
    }
    v.dot(&gradient.transpose())
}

fn moreau_suite() -> Result<SuiteResult> {
    let psi = |w: &[f64]| Ok((0.5 * w.iter().map(|v| v * v).sum::<f64>(), w.to_vec()));
    let probe = MoreauProbe {
        rho: 0.25,
        inner_iters: 100_000,
        inner_tol: 1e-12,
        l_hat: 1.0,
    };
    let g = moreau_gradient(&psi, &[1.0, 0.0], &probe)?;
    let passed = usize::from((g[0] - 0.8).abs() < 1e-6 && g[1].abs() < 1e-9);
    Ok(SuiteResult {
        name: "moreau quadratic identity",
        passed,
        total: 1,
    })
}
