//! TOML configuration schemas. Unknown keys are rejected everywhere so a
//! typo in a hyperparameter name fails loudly instead of silently running
//! with a default.

use serde::{Deserialize, Serialize};

use radlab_core::bounds::{BoundParams, CeSumVariant, RhoVariant};
use radlab_core::error::{Error, Result};
use radlab_core::masking::{MaskGranularity, MaskTransform};
use radlab_core::pretrain::TrainConfig;
use radlab_core::synth::SynthConfig;

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub pretrain: usize,
    pub downstream: usize,
    #[serde(default)]
    pub test: usize,
    pub dim: usize,
    #[serde(default = "default_one_usize")]
    pub patches: usize,
    pub c1: f64,
    pub c2: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_one_usize() -> usize {
    1
}

fn default_margin() -> f64 {
    0.1
}

impl TaskSection {
    pub fn to_synth(&self, seed: u64, depth_hint: Option<usize>) -> SynthConfig {
        SynthConfig {
            n_pretrain: self.pretrain,
            n_downstream: self.downstream,
            n_test: self.test,
            dim: self.dim,
            patches: self.patches,
            c1_target: self.c1,
            c2_target: self.c2,
            label_margin: self.margin,
            seed,
            depth_hint,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "ce" (vector MLP autoencoder) or "mae" (patch attention autoencoder).
    pub kind: String,
    pub hidden: usize,
    pub depth: usize,
    #[serde(default)]
    pub attn_dim: usize,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub alpha2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaskSection {
    pub ratio: f64,
    #[serde(default)]
    pub fill: f64,
    #[serde(default)]
    pub masked_only: bool,
}

impl MaskSection {
    pub fn to_transform(&self, seed: u64, patches: usize) -> MaskTransform {
        MaskTransform {
            mask_ratio: self.ratio,
            fill_value: self.fill,
            seed,
            granularity: if patches > 1 {
                MaskGranularity::Patch
            } else {
                MaskGranularity::Coordinate
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub iterations: usize,
    /// 0 selects full-batch descent.
    #[serde(default)]
    pub batch: usize,
}

impl TrainSection {
    pub fn to_train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            batch_size: if self.batch == 0 { None } else { Some(self.batch) },
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    pub learning_rate: f64,
    pub iterations: usize,
    pub head_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RadRegSection {
    pub lambda: f64,
    /// Number of sign configurations B.
    pub configs: usize,
    pub gamma: f64,
    #[serde(default)]
    pub dual_radius: f64,
    #[serde(default = "default_true")]
    pub project: bool,
    /// Sign configurations for the post-training complexity estimate.
    #[serde(default = "default_estimate_configs")]
    pub estimate_configs: usize,
}

fn default_estimate_configs() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    pub lambda_l2: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.01
}

/// Top-level file for `pretrain`, `radreg` and `experiment`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: TaskSection,
    pub model: ModelSection,
    pub mask: MaskSection,
    pub pretrain: TrainSection,
    #[serde(default)]
    pub finetune: Option<FinetuneSection>,
    #[serde(default)]
    pub radreg: Option<RadRegSection>,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match self.model.kind.as_str() {
            "ce" => {
                if self.task.patches > 1 {
                    return Err(Error::validation("ce models take vector tasks (patches = 1)"));
                }
            }
            "mae" => {
                if self.task.patches < 2 {
                    return Err(Error::validation("mae models need patches >= 2"));
                }
                if self.model.attn_dim == 0 {
                    return Err(Error::validation("mae models need attn_dim"));
                }
            }
            other => {
                return Err(Error::validation(format!(
                    "unknown model kind {other:?} (expected ce or mae)"
                )))
            }
        }
        if let Some(r) = &self.radreg {
            if r.configs == 0 {
                return Err(Error::validation("radreg.configs must be at least 1"));
            }
            if r.lambda < 0.0 || r.gamma < 0.0 {
                return Err(Error::validation("radreg.lambda and gamma must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Top-level file for the `bounds` command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// "ce" or "mae".
    pub kind: String,
    pub w_caps: Vec<f64>,
    pub b_caps: Vec<f64>,
    pub z_norm: f64,
    pub x_sq_sum: f64,
    #[serde(default = "default_one")]
    pub x_star: f64,
    pub dim: f64,
    pub width: f64,
    #[serde(default = "default_one")]
    pub patches: f64,
    #[serde(default = "default_one")]
    pub attn_dim: f64,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub alpha2: f64,
    pub n: f64,
    pub n_pretrain: f64,
    pub confidence: f64,
    #[serde(default = "default_one")]
    pub smoothness: f64,
    #[serde(default = "default_one")]
    pub loss_bound_pre: f64,
    #[serde(default = "default_one")]
    pub lipschitz: f64,
    #[serde(default = "default_one")]
    pub loss_bound_down: f64,
    pub head_radius: f64,
    #[serde(default)]
    pub tv: f64,
    #[serde(default = "default_one")]
    pub transfer_coeff: f64,
    #[serde(default = "default_one")]
    pub covering_mult: f64,
    /// "appendix" (default) or "main".
    #[serde(default)]
    pub rho_variant: Option<String>,
    #[serde(default)]
    pub ce_sum_variant: Option<String>,
}

impl BoundsSection {
    pub fn to_params(&self) -> BoundParams {
        BoundParams {
            w_caps: self.w_caps.clone(),
            b_caps: self.b_caps.clone(),
            z_norm: self.z_norm,
            x_sq_sum: self.x_sq_sum,
            x_star: self.x_star,
            dim: self.dim,
            width: self.width,
            patches: self.patches,
            attn_dim: self.attn_dim,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            n: self.n,
            big_n: self.n_pretrain,
            confidence: self.confidence,
            smoothness: self.smoothness,
            loss_bound_pre: self.loss_bound_pre,
            lipschitz: self.lipschitz,
            loss_bound_down: self.loss_bound_down,
            head_radius: self.head_radius,
            tv: self.tv,
            transfer_coeff: self.transfer_coeff,
            covering_mult: self.covering_mult,
        }
    }

    pub fn rho_variant(&self, cli_override: Option<&str>) -> Result<RhoVariant> {
        let chosen = cli_override.or(self.rho_variant.as_deref()).unwrap_or("appendix");
        match chosen {
            "appendix" => Ok(RhoVariant::Appendix),
            "main" => Ok(RhoVariant::MainText),
            other => Err(Error::validation(format!("unknown rho variant {other:?}"))),
        }
    }

    pub fn ce_sum_variant(&self) -> Result<CeSumVariant> {
        match self.ce_sum_variant.as_deref().unwrap_or("appendix") {
            "appendix" => Ok(CeSumVariant::Appendix),
            "main" => Ok(CeSumVariant::MainText),
            other => Err(Error::validation(format!("unknown sum variant {other:?}"))),
        }
    }
}

pub fn parse_pipeline(text: &str) -> Result<PipelineConfig> {
    let cfg: PipelineConfig =
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_bounds(text: &str) -> Result<BoundsFile> {
    toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
}
