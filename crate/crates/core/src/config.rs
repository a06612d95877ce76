//! Pipeline configuration: one JSON document parameterizing every command,
//! with per-command flag overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canon::sha256_hex;
use crate::error::{Error, Result};
use crate::imaging::{EnhanceParams, JitterParams};
use crate::pseudolabel::{AdapterSpec, ThresholdPolicy};

/// Which enhancement chain a command applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    /// CLAHE then median blur.
    Soft,
    /// Unsharp mask then CLAHE.
    Final,
    /// Pass images through untouched.
    None,
}

impl ChainKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChainKind::Soft => "soft",
            ChainKind::Final => "final",
            ChainKind::None => "none",
        }
    }
}

impl std::str::FromStr for ChainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(ChainKind::Soft),
            "final" => Ok(ChainKind::Final),
            "none" => Ok(ChainKind::None),
            other => Err(Error::contract(format!(
                "unknown chain `{other}`, expected soft|final|none"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default)]
    pub labeled_dataset: Option<PathBuf>,
    #[serde(default)]
    pub unlabeled_manifest: Option<PathBuf>,
    #[serde(default)]
    pub unlabeled_images: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceConfig {
    #[serde(default = "default_chain")]
    pub chain: ChainKind,
    #[serde(default = "default_clip")]
    pub clahe_clip_limit: f64,
    #[serde(default = "default_tiles")]
    pub clahe_tiles: (u32, u32),
    #[serde(default = "default_median")]
    pub median_kernel: u32,
    #[serde(default = "default_sigma")]
    pub unsharp_sigma: f64,
    #[serde(default = "default_amount")]
    pub unsharp_amount: f64,
    /// Apply the selected chain to unlabeled images before handing them to
    /// the inference adapter.
    #[serde(default)]
    pub before_inference: bool,
}

fn default_chain() -> ChainKind {
    ChainKind::Soft
}
fn default_clip() -> f64 {
    2.0
}
fn default_tiles() -> (u32, u32) {
    (8, 8)
}
fn default_median() -> u32 {
    5
}
fn default_sigma() -> f64 {
    2.0
}
fn default_amount() -> f64 {
    1.0
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            chain: default_chain(),
            clahe_clip_limit: default_clip(),
            clahe_tiles: default_tiles(),
            median_kernel: default_median(),
            unsharp_sigma: default_sigma(),
            unsharp_amount: default_amount(),
            before_inference: false,
        }
    }
}

impl EnhanceConfig {
    pub fn params(&self) -> EnhanceParams {
        EnhanceParams {
            clahe_clip_limit: self.clahe_clip_limit,
            clahe_tiles: self.clahe_tiles,
            median_kernel: self.median_kernel,
            unsharp_sigma: self.unsharp_sigma,
            unsharp_amount: self.unsharp_amount,
        }
    }
}

/// Random augmentation settings: HSV jitter gains plus per-transform
/// enables. Translation and scaling are enabled by nonzero ranges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default)]
    pub hue_gain: f64,
    #[serde(default)]
    pub sat_gain: f64,
    #[serde(default)]
    pub val_gain: f64,
    #[serde(default)]
    pub hflip: bool,
    #[serde(default)]
    pub vflip: bool,
    /// Maximum translation as a fraction of each image dimension.
    #[serde(default)]
    pub translate_frac: f64,
    /// Maximum deviation of the scale factor from 1.
    #[serde(default)]
    pub scale_delta: f64,
}

impl AugmentConfig {
    pub fn jitter(&self, seed: u64) -> JitterParams {
        JitterParams {
            hue_gain: self.hue_gain,
            sat_gain: self.sat_gain,
            val_gain: self.val_gain,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.jitter(0).validate()?;
        if !(0.0..=1.0).contains(&self.translate_frac) {
            return Err(Error::contract("translate_frac must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.scale_delta) {
            return Err(Error::contract("scale_delta must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
}

fn default_iou() -> f64 {
    0.5
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: default_iou(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub enhance: EnhanceConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub adapter: Option<AdapterSpec>,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::from_json(&e, &text))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.enhance.params().validate()?;
        self.augment.validate()?;
        self.threshold.validate()?;
        if let Some(adapter) = &self.adapter {
            adapter.validate()?;
        }
        if !(0.0..=1.0).contains(&self.eval.iou_threshold) {
            return Err(Error::contract("eval.iou_threshold must be in [0, 1]"));
        }
        Ok(())
    }

    /// Digest over the semantic parameters only. Input/output paths and the
    /// adapter's location are excluded so artifacts are relocatable: the
    /// digest identifies *what* was computed, not *where*.
    pub fn params_digest(&self) -> String {
        let adapter_mode = self
            .adapter
            .as_ref()
            .map(|a| a.mode_name())
            .unwrap_or("none");
        let v = serde_json::json!({
            "seed": self.seed,
            "enhance": {
                "chain": self.enhance.chain.as_str(),
                "clahe_clip_limit": self.enhance.clahe_clip_limit,
                "clahe_tiles": [self.enhance.clahe_tiles.0, self.enhance.clahe_tiles.1],
                "median_kernel": self.enhance.median_kernel,
                "unsharp_sigma": self.enhance.unsharp_sigma,
                "unsharp_amount": self.enhance.unsharp_amount,
                "before_inference": self.enhance.before_inference,
            },
            "augment": {
                "hue_gain": self.augment.hue_gain,
                "sat_gain": self.augment.sat_gain,
                "val_gain": self.augment.val_gain,
                "hflip": self.augment.hflip,
                "vflip": self.augment.vflip,
                "translate_frac": self.augment.translate_frac,
                "scale_delta": self.augment.scale_delta,
            },
            "adapter_mode": adapter_mode,
            "tau": self.threshold.tau,
            "iou_threshold": self.eval.iou_threshold,
        });
        sha256_hex(crate::canon::canonical_value(&v).as_bytes())
    }
}
