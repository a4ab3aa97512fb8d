//! The comparison experiment: pre-train the same model under three
//! regularizers (none, L2 on encoder weights, the Rademacher estimate on
//! downstream representations), fine-tune a linear head, and report test
//! accuracy plus the post-pre-training complexity estimate.
//!
//! All three variants share the task, masks, initialization and batch
//! schedule for each seed, so with both regularizer weights at zero they
//! produce bit-identical trajectories.

use std::path::Path;

use radlab_core::error::{Error, Result};
use radlab_core::masking::apply_mask;
use radlab_core::minimax::{radreg_train, RadRegOracle, SgdaConfig, SgdaTrace};
use radlab_core::models::losses::head_accuracy;
use radlab_core::models::Autoencoder;
use radlab_core::pretrain::{build, finetune_linear};
use radlab_core::radreg::{estimate_complexity, sample_rademacher};
use radlab_core::synth::{gen_synth, SynthTask};

use crate::config::PipelineConfig;
use crate::report::{write_comparison, write_sgda_csv, ComparisonRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    None,
    L2,
    RadReg,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::L2 => "l2",
            Variant::RadReg => "radreg",
        }
    }

    pub fn all() -> [Variant; 3] {
        [Variant::None, Variant::L2, Variant::RadReg]
    }
}

pub struct VariantOutcome {
    pub row: ComparisonRow,
    pub trace: SgdaTrace,
    pub final_params: Vec<f64>,
    pub warnings: Vec<String>,
}

fn build_model(cfg: &PipelineConfig, seed: u64) -> Result<Autoencoder> {
    let m = &cfg.model;
    let t = &cfg.task;
    Ok(match m.kind.as_str() {
        "ce" => Autoencoder::Ce(build::ce_model(t.dim, m.hidden, m.depth, t.dim, seed)?),
        "mae" => Autoencoder::Mae(build::mae_model(
            t.dim,
            m.attn_dim,
            m.hidden,
            m.depth,
            t.patches,
            m.alpha1,
            m.alpha2,
            seed,
        )?),
        other => return Err(Error::validation(format!("unknown model kind {other:?}"))),
    })
}

/// One pre-train + fine-tune pipeline under the given variant.
pub fn run_variant(
    cfg: &PipelineConfig,
    task: &SynthTask,
    variant: Variant,
    seed: u64,
) -> Result<VariantOutcome> {
    let radreg = cfg
        .radreg
        .as_ref()
        .ok_or_else(|| Error::validation("experiment needs a [radreg] section"))?;
    let finetune = cfg
        .finetune
        .as_ref()
        .ok_or_else(|| Error::validation("experiment needs a [finetune] section"))?;
    let exp = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Error::validation("experiment needs an [experiment] section"))?;

    let model = build_model(cfg, seed)?;
    let pre_data = apply_mask(&task.pretrain, &cfg.mask.to_transform(seed, cfg.task.patches))?;
    let aux_data = apply_mask(
        &task.downstream_x,
        &cfg.mask.to_transform(seed.wrapping_add(1), cfg.task.patches),
    )?;
    let signs = sample_rademacher(radreg.configs, task.downstream_x.len(), 1, seed)?;

    let (lambda, l2_weight, reported_lambda) = match variant {
        Variant::None => (0.0, 0.0, 0.0),
        Variant::L2 => (0.0, exp.lambda_l2, exp.lambda_l2),
        Variant::RadReg => (radreg.lambda, 0.0, radreg.lambda),
    };

    let w0 = model.params_flat();
    let mut oracle = RadRegOracle {
        model,
        pretrain: pre_data,
        masked_only: cfg.mask.masked_only,
        downstream_x: task.downstream_x.clone(),
        signs,
        batch_size: if cfg.pretrain.batch == 0 {
            None
        } else {
            Some(cfg.pretrain.batch)
        },
        aux: Some((aux_data, exp.alpha)),
        l2_weight,
    };
    let dual_radius = if radreg.dual_radius > 0.0 {
        radreg.dual_radius
    } else {
        finetune.head_radius
    };
    let sgda = SgdaConfig {
        eta: cfg.pretrain.learning_rate,
        gamma: radreg.gamma,
        lambda,
        iterations: cfg.pretrain.iterations,
        dual_radius: radreg.project.then_some(dual_radius),
        seed,
        probe: None,
    };
    let run = radreg_train(&mut oracle, w0, &sgda)?;

    let mut model = oracle.model;
    model.set_params_flat(&run.final_w)?;

    let est_signs = sample_rademacher(
        radreg.estimate_configs,
        task.downstream_x.len(),
        1,
        seed.wrapping_add(2),
    )?;
    let est = estimate_complexity(
        &model,
        &task.downstream_x,
        &est_signs,
        finetune.head_radius,
    )?;

    let reps_down = model.representation(&task.downstream_x)?;
    let reps_test = model.representation(&task.test_x)?;
    let ft_cfg = radlab_core::pretrain::TrainConfig {
        learning_rate: finetune.learning_rate,
        iterations: finetune.iterations,
        batch_size: None,
        seed,
    };
    let fit = finetune_linear(
        &reps_down,
        &task.downstream_y,
        &ft_cfg,
        finetune.head_radius,
        Some((&reps_test, &task.test_y)),
    )?;
    let final_acc = fit.eval_accuracy.last().copied().unwrap_or(0.0);
    let best_acc = fit
        .eval_accuracy
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let train_acc = head_accuracy(&reps_down, &fit.head.theta, &task.downstream_y);

    Ok(VariantOutcome {
        row: ComparisonRow {
            variant: format!("{}:seed={seed}", variant.name()),
            lambda: reported_lambda,
            final_acc,
            best_acc,
            train_acc,
            rad_est: est.mean,
        },
        trace: run.trace,
        final_params: run.final_w,
        warnings: task.warnings.clone(),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub struct ComparisonOutcome {
    pub csv: String,
    pub failures: Vec<String>,
}

/// The full grid: every seed under every variant, plus per-variant
/// mean/std summary rows. A failing variant is reported and skipped; the
/// others still run.
pub fn run_comparison(cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<ComparisonOutcome> {
    let exp = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Error::validation("experiment needs an [experiment] section"))?;
    if exp.seeds.is_empty() {
        return Err(Error::validation("experiment.seeds must be nonempty"));
    }
    let mut rows: Vec<ComparisonRow> = Vec::new();
    let mut failures = Vec::new();
    let mut per_variant: Vec<(Variant, Vec<ComparisonRow>)> =
        Variant::all().into_iter().map(|v| (v, Vec::new())).collect();

    for &seed in &exp.seeds {
        let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth)))?;
        for (variant, collected) in per_variant.iter_mut() {
            match run_variant(cfg, &task, *variant, seed) {
                Ok(outcome) => {
                    if let Some(dir) = out_dir {
                        let traces = dir.join("traces");
                        std::fs::create_dir_all(&traces)
                            .map_err(|e| Error::validation(format!("output dir: {e}")))?;
                        std::fs::write(
                            traces.join(format!("{}-{seed}.csv", variant.name())),
                            write_sgda_csv(&outcome.trace),
                        )
                        .map_err(|e| Error::validation(format!("trace write: {e}")))?;
                    }
                    rows.push(outcome.row.clone());
                    collected.push(outcome.row);
                }
                Err(e) => failures.push(format!("{} seed {seed}: {e}", variant.name())),
            }
        }
    }

    for (variant, collected) in &per_variant {
        if collected.is_empty() {
            continue;
        }
        let pick = |f: fn(&ComparisonRow) -> f64| -> Vec<f64> { collected.iter().map(f).collect() };
        let (fm, fs) = mean_std(&pick(|r| r.final_acc));
        let (bm, bs) = mean_std(&pick(|r| r.best_acc));
        let (tm, ts) = mean_std(&pick(|r| r.train_acc));
        let (rm, rs) = mean_std(&pick(|r| r.rad_est));
        let lambda = collected[0].lambda;
        rows.push(ComparisonRow {
            variant: format!("{}:mean", variant.name()),
            lambda,
            final_acc: fm,
            best_acc: bm,
            train_acc: tm,
            rad_est: rm,
        });
        rows.push(ComparisonRow {
            variant: format!("{}:std", variant.name()),
            lambda,
            final_acc: fs,
            best_acc: bs,
            train_acc: ts,
            rad_est: rs,
        });
    }

    let csv = write_comparison(&rows);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::validation(format!("output dir: {e}")))?;
        std::fs::write(dir.join("comparison.csv"), &csv)
            .map_err(|e| Error::validation(format!("report write: {e}")))?;
    }
    if rows.is_empty() {
        return Err(Error::numerical(format!(
            "every variant failed: {}",
            failures.join("; ")
        )));
    }
    Ok(ComparisonOutcome { csv, failures })
}
