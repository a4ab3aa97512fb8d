//! Command-line surface: pre-training, fine-tuning, regularized minimax
//! training, bound evaluation, the regularizer comparison experiment,
//! synthetic data generation, and the verification suite.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.

use radlab_cli::{config, experiment, manifest, report, verify, weights};

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use radlab_core::error::Error as CoreError;
use radlab_core::masking::apply_mask;
use radlab_core::minimax::{
    radreg_train, MinimaxOracle, MoreauProbe, RadRegOracle, SgdaConfig, SgdaProbeConfig,
};
use radlab_core::models::Autoencoder;
use radlab_core::pretrain::finetune_linear;
use radlab_core::radreg::sample_rademacher;
use radlab_core::synth::gen_synth;

#[derive(Parser)]
#[command(name = "radlab", version, about = "Desk-scale pre-training laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task and dump it as a tensor container.
    GenData(CommonArgs),
    /// Plain gradient-descent pre-training.
    Pretrain {
        #[command(flatten)]
        common: CommonArgs,
        /// Score the reconstruction loss on masked units only.
        #[arg(long)]
        masked_only: bool,
    },
    /// Linear-head fine-tuning on frozen pre-trained weights.
    Finetune {
        #[command(flatten)]
        common: CommonArgs,
        /// Weight container produced by `pretrain` or `radreg`.
        #[arg(long)]
        weights: PathBuf,
    },
    /// Rademacher-regularized minimax pre-training.
    Radreg {
        #[command(flatten)]
        common: CommonArgs,
        /// Regularization coefficient override.
        #[arg(long)]
        lambda: Option<f64>,
        /// Number of sign configurations override.
        #[arg(long = "B")]
        configs: Option<usize>,
        #[arg(long)]
        masked_only: bool,
        /// Disable the dual-ball projection after ascent steps.
        #[arg(long)]
        no_project: bool,
        /// Probe the Moreau stationarity every this many iterations.
        #[arg(long)]
        probe_cadence: Option<usize>,
    },
    /// Three-way regularizer comparison over paired seeds.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
        /// Run a single variant instead of all three.
        #[arg(long, value_parser = ["none", "l2", "radreg"])]
        variant: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long = "B")]
        configs: Option<usize>,
        #[arg(long)]
        masked_only: bool,
        #[arg(long)]
        no_project: bool,
    },
    /// Evaluate a bound decomposition and print it as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-layer covering-price variant: appendix (default) or main.
        #[arg(long, value_parser = ["appendix", "main"])]
        rho_variant: Option<String>,
    },
    /// Run the randomized property suites and print pass counts.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::Validation(_) | CoreError::Dimension { .. } => 1,
            CoreError::NonConvergence { .. }
            | CoreError::Divergence { .. }
            | CoreError::Numerical(_) => 2,
        };
        fail(code, e.to_string())
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| fail(1, format!("cannot read {}: {e}", path.display())))
}

fn ensure_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| fail(1, format!("output dir: {e}")))
}

fn write_out(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| fail(1, format!("write {}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    task: config::TaskSection,
    #[serde(default)]
    depth_hint: Option<usize>,
}

fn cmd_gen_data(common: &CommonArgs) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let file: TaskFile = toml::from_str(&text).map_err(|e| fail(1, format!("config: {e}")))?;
    let seed = common.seed.unwrap_or(0);
    let task = gen_synth(&file.task.to_synth(seed, file.depth_hint))?;
    for w in &task.warnings {
        eprintln!("warning: {w}");
    }
    ensure_out(&common.out)?;

    let mut tensors: Vec<(String, radlab_core::DenseMatrix)> = Vec::new();
    let push_batch = |tensors: &mut Vec<(String, radlab_core::DenseMatrix)>,
                      name: &str,
                      batch: &radlab_core::models::Batch| {
        match batch {
            radlab_core::models::Batch::Vectors(m) => tensors.push((name.to_string(), m.clone())),
            radlab_core::models::Batch::Patches(samples) => {
                for (i, s) in samples.iter().enumerate() {
                    tensors.push((format!("{name}.{i}"), s.clone()));
                }
            }
        }
    };
    push_batch(&mut tensors, "pretrain", &task.pretrain);
    push_batch(&mut tensors, "downstream_x", &task.downstream_x);
    tensors.push((
        "downstream_y".to_string(),
        radlab_core::DenseMatrix::column(&task.downstream_y),
    ));
    push_batch(&mut tensors, "test_x", &task.test_x);
    tensors.push((
        "test_y".to_string(),
        radlab_core::DenseMatrix::column(&task.test_y),
    ));
    tensors.push((
        "planted".to_string(),
        radlab_core::DenseMatrix::column(&task.planted),
    ));
    weights::save_weights(&common.out.join("task.bin"), &tensors)
        .map_err(|e| fail(2, e.to_string()))?;
    manifest::write_manifest(&common.out, "gen-data", seed, &file.task)
        .map_err(|e| fail(1, format!("manifest: {e}")))?;
    println!(
        "task written to {} (c1 = {}, c2 = {})",
        common.out.display(),
        task.c1,
        task.c2
    );
    Ok(())
}

fn build_model_from(cfg: &config::PipelineConfig, seed: u64) -> Result<Autoencoder, Failure> {
    use radlab_core::pretrain::build;
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
        other => return Err(fail(1, format!("unknown model kind {other:?}"))),
    })
}

fn cmd_pretrain(common: &CommonArgs, masked_only: bool) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let mut cfg = config::parse_pipeline(&text)?;
    cfg.mask.masked_only |= masked_only;
    let seed = common.seed.unwrap_or(0);
    let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth)))?;
    for w in &task.warnings {
        eprintln!("warning: {w}");
    }
    let mut model = build_model_from(&cfg, seed)?;
    let data = apply_mask(&task.pretrain, &cfg.mask.to_transform(seed, cfg.task.patches))?;
    let trace = radlab_core::pretrain::pretrain(
        &mut model,
        &cfg.pretrain.to_train(seed),
        &data,
        cfg.mask.masked_only,
    )?;
    ensure_out(&common.out)?;
    weights::save_weights(&common.out.join("weights.bin"), &model.named_tensors())
        .map_err(|e| fail(2, e.to_string()))?;
    write_out(&common.out.join("loss.csv"), report::write_loss_csv(&trace))?;
    manifest::write_manifest(&common.out, "pretrain", seed, &cfg)
        .map_err(|e| fail(1, format!("manifest: {e}")))?;
    println!(
        "pre-training done: loss {} -> {}",
        trace.first().unwrap(),
        trace.last().unwrap()
    );
    Ok(())
}

fn load_model_weights(model: &mut Autoencoder, path: &Path) -> Result<(), Failure> {
    let loaded = weights::load_weights(path).map_err(|e| fail(2, e.to_string()))?;
    let expected = model.named_tensors();
    if loaded.len() != expected.len() {
        return Err(fail(
            2,
            format!(
                "container holds {} tensors, model needs {}",
                loaded.len(),
                expected.len()
            ),
        ));
    }
    let mut flat = Vec::new();
    for ((name, tensor), (want_name, want)) in loaded.iter().zip(&expected) {
        if name != want_name || tensor.rows() != want.rows() || tensor.cols() != want.cols() {
            return Err(fail(
                2,
                format!(
                    "tensor {name} ({}x{}) does not match expected {want_name} ({}x{})",
                    tensor.rows(),
                    tensor.cols(),
                    want.rows(),
                    want.cols()
                ),
            ));
        }
        flat.extend_from_slice(tensor.data());
    }
    model.set_params_flat(&flat)?;
    Ok(())
}

fn cmd_finetune(common: &CommonArgs, weights_path: &Path) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let cfg = config::parse_pipeline(&text)?;
    let ft = cfg
        .finetune
        .clone()
        .ok_or_else(|| fail(1, "finetune needs a [finetune] section"))?;
    let seed = common.seed.unwrap_or(0);
    let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth)))?;
    let mut model = build_model_from(&cfg, seed)?;
    load_model_weights(&mut model, weights_path)?;

    let reps = model.representation(&task.downstream_x)?;
    let reps_test = model.representation(&task.test_x)?;
    let out = finetune_linear(
        &reps,
        &task.downstream_y,
        &radlab_core::pretrain::TrainConfig {
            learning_rate: ft.learning_rate,
            iterations: ft.iterations,
            batch_size: None,
            seed,
        },
        ft.head_radius,
        Some((&reps_test, &task.test_y)),
    )?;
    ensure_out(&common.out)?;
    let mut csv = String::from("iteration,train_risk,eval_risk,eval_acc\n");
    for t in 0..out.train_risk.len() {
        use std::fmt::Write as _;
        writeln!(
            csv,
            "{t},{},{},{}",
            out.train_risk[t], out.eval_risk[t], out.eval_accuracy[t]
        )
        .expect("string write");
    }
    write_out(&common.out.join("finetune.csv"), csv)?;
    weights::save_weights(
        &common.out.join("head.bin"),
        &[(
            "theta".to_string(),
            radlab_core::DenseMatrix::column(&out.head.theta),
        )],
    )
    .map_err(|e| fail(2, e.to_string()))?;
    manifest::write_manifest(&common.out, "finetune", seed, &cfg)
        .map_err(|e| fail(1, format!("manifest: {e}")))?;
    println!(
        "fine-tuning done: train risk {}, held-out accuracy {}",
        out.train_risk.last().unwrap(),
        out.eval_accuracy.last().unwrap()
    );
    Ok(())
}

fn cmd_radreg(
    common: &CommonArgs,
    lambda: Option<f64>,
    configs: Option<usize>,
    masked_only: bool,
    no_project: bool,
    probe_cadence: Option<usize>,
) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let mut cfg = config::parse_pipeline(&text)?;
    cfg.mask.masked_only |= masked_only;
    let mut rr = cfg
        .radreg
        .clone()
        .ok_or_else(|| fail(1, "radreg needs a [radreg] section"))?;
    if let Some(l) = lambda {
        rr.lambda = l;
    }
    if let Some(b) = configs {
        rr.configs = b;
    }
    if no_project {
        rr.project = false;
    }
    if rr.lambda < 0.0 {
        return Err(fail(1, "lambda must be nonnegative"));
    }
    let seed = common.seed.unwrap_or(0);
    let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth)))?;
    let model = build_model_from(&cfg, seed)?;
    let w0 = model.params_flat();
    let pre = apply_mask(&task.pretrain, &cfg.mask.to_transform(seed, cfg.task.patches))?;
    let signs = sample_rademacher(rr.configs, task.downstream_x.len(), 1, seed)?;
    let head_radius = cfg.finetune.as_ref().map_or(5.0, |f| f.head_radius);
    let dual_radius = if rr.dual_radius > 0.0 {
        rr.dual_radius
    } else {
        head_radius
    };
    let mut oracle = RadRegOracle {
        model,
        pretrain: pre,
        masked_only: cfg.mask.masked_only,
        downstream_x: task.downstream_x.clone(),
        signs,
        batch_size: if cfg.pretrain.batch == 0 {
            None
        } else {
            Some(cfg.pretrain.batch)
        },
        aux: None,
        l2_weight: 0.0,
    };
    // Stationarity probes need a smoothness estimate: take the largest
    // local gradient-Lipschitz ratio over random pairs near the start.
    let probe = match probe_cadence.filter(|&c| c > 0) {
        None => None,
        Some(cadence) => {
            let lambda = rr.lambda;
            let psi = |w: &[f64]| oracle.primal_value_and_grad(w, lambda, dual_radius);
            let l_hat =
                radlab_core::minimax::estimate_smoothness(&psi, &w0, 0.05, 100, seed)?.max(1e-3);
            let mut probe = MoreauProbe::for_smoothness(l_hat);
            probe.inner_tol = 1e-6;
            Some(SgdaProbeConfig {
                cadence,
                probe,
                radius: dual_radius,
            })
        }
    };
    let sgda = SgdaConfig {
        eta: cfg.pretrain.learning_rate,
        gamma: rr.gamma,
        lambda: rr.lambda,
        iterations: cfg.pretrain.iterations,
        dual_radius: rr.project.then_some(dual_radius),
        seed,
        probe,
    };
    let run = radreg_train(&mut oracle, w0, &sgda)?;
    let mut model = oracle.model;
    model.set_params_flat(&run.final_w)?;

    ensure_out(&common.out)?;
    weights::save_weights(&common.out.join("weights.bin"), &model.named_tensors())
        .map_err(|e| fail(2, e.to_string()))?;
    let mut sampled = model.clone();
    sampled.set_params_flat(&run.sampled_w)?;
    weights::save_weights(
        &common.out.join("weights-sampled.bin"),
        &sampled.named_tensors(),
    )
    .map_err(|e| fail(2, e.to_string()))?;
    write_out(&common.out.join("trace.csv"), report::write_sgda_csv(&run.trace))?;
    manifest::write_manifest(&common.out, "radreg", seed, &cfg)
        .map_err(|e| fail(1, format!("manifest: {e}")))?;
    println!(
        "minimax training done: final loss {}, sampled iterate {} (both weight files written)",
        run.trace.loss.last().unwrap(),
        run.sampled_index
    );
    Ok(())
}

fn cmd_experiment(
    common: &CommonArgs,
    variant: Option<&str>,
    lambda: Option<f64>,
    configs: Option<usize>,
    masked_only: bool,
    no_project: bool,
) -> Result<(), Failure> {
    let text = read_config(&common.config)?;
    let mut cfg = config::parse_pipeline(&text)?;
    cfg.mask.masked_only |= masked_only;
    if let Some(rr) = cfg.radreg.as_mut() {
        if let Some(l) = lambda {
            rr.lambda = l;
        }
        if let Some(b) = configs {
            rr.configs = b;
        }
        if no_project {
            rr.project = false;
        }
    }
    if let Some(seed) = common.seed {
        if let Some(exp) = cfg.experiment.as_mut() {
            exp.seeds = vec![seed];
        }
    }
    ensure_out(&common.out)?;

    if let Some(v) = variant {
        let chosen = match v {
            "none" => experiment::Variant::None,
            "l2" => experiment::Variant::L2,
            _ => experiment::Variant::RadReg,
        };
        let seeds = cfg
            .experiment
            .as_ref()
            .map(|e| e.seeds.clone())
            .unwrap_or_else(|| vec![0]);
        let mut rows = Vec::new();
        for seed in seeds {
            let task = gen_synth(&cfg.task.to_synth(seed, Some(cfg.model.depth)))?;
            let outcome = experiment::run_variant(&cfg, &task, chosen, seed)?;
            rows.push(outcome.row);
        }
        let csv = report::write_comparison(&rows);
        write_out(&common.out.join("comparison.csv"), &csv)?;
        print!("{csv}");
    } else {
        let outcome = experiment::run_comparison(&cfg, Some(&common.out))?;
        for f in &outcome.failures {
            eprintln!("variant failed: {f}");
        }
        print!("{}", outcome.csv);
    }
    manifest::write_manifest(&common.out, "experiment", common.seed.unwrap_or(0), &cfg)
        .map_err(|e| fail(1, format!("manifest: {e}")))?;
    Ok(())
}

fn cmd_bounds(
    config_path: &Path,
    out: Option<&Path>,
    rho_variant: Option<&str>,
) -> Result<(), Failure> {
    let text = read_config(config_path)?;
    let file = config::parse_bounds(&text)?;
    let section = &file.bounds;
    let params = section.to_params();
    let decomposition = match section.kind.as_str() {
        "ce" => radlab_core::bounds::ce_bound(&params, section.ce_sum_variant()?)?,
        "mae" => radlab_core::bounds::mae_bound(&params, section.rho_variant(rho_variant)?)?,
        other => return Err(fail(1, format!("unknown bound kind {other:?}"))),
    };
    let json = serde_json::json!({
        "kind": section.kind,
        "terms": {
            "complexity": decomposition.complexity,
            "pretrain": decomposition.pretrain,
            "pretrain_excess": decomposition.pretrain_excess,
            "confidence": decomposition.confidence,
            "tv": decomposition.tv,
        },
        "total": decomposition.total,
    });
    let pretty = serde_json::to_string_pretty(&json).expect("json serializes");
    match out {
        Some(path) => write_out(path, &pretty)?,
        None => println!("{pretty}"),
    }
    Ok(())
}

fn cmd_verify(seed: u64) -> Result<(), Failure> {
    let results = verify::run_all(seed)?;
    let mut all_ok = true;
    for r in &results {
        println!("{:<42} {}/{}", r.name, r.passed, r.total);
        all_ok &= r.ok();
    }
    if all_ok {
        println!("all suites passed");
        Ok(())
    } else {
        Err(fail(2, "one or more verification suites failed"))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenData(common) => cmd_gen_data(common),
        Command::Pretrain {
            common,
            masked_only,
        } => cmd_pretrain(common, *masked_only),
        Command::Finetune { common, weights } => cmd_finetune(common, weights),
        Command::Radreg {
            common,
            lambda,
            configs,
            masked_only,
            no_project,
            probe_cadence,
        } => cmd_radreg(
            common,
            *lambda,
            *configs,
            *masked_only,
            *no_project,
            *probe_cadence,
        ),
        Command::Experiment {
            common,
            variant,
            lambda,
            configs,
            masked_only,
            no_project,
        } => cmd_experiment(
            common,
            variant.as_deref(),
            *lambda,
            *configs,
            *masked_only,
            *no_project,
        ),
        Command::Bounds {
            config,
            out,
            rho_variant,
        } => cmd_bounds(config, out.as_deref(), rho_variant.as_deref()),
        Command::Verify { seed } => cmd_verify(*seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems (including unknown flags) exit with 1; the
            // help and version displays are successes.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
