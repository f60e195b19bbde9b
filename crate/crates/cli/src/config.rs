//! The run configuration file shared by every command.

use std::path::Path;

use densecap::captioning::{CaptionConfig, ContextMode};
use densecap::corpus::{DEFAULT_DELTA_FRAMES, DEFAULT_FPS};
use densecap::metrics::DenseCaptionConfig;
use densecap::proposals::ProposalConfig;
use densecap::retrieval::RetrievalConfig;
use densecap::training::{ModelConfig, TrainConfig};
use densecap::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureFormat {
    pub delta_frames: u32,
    pub fps: f64,
}

impl Default for FeatureFormat {
    fn default() -> Self {
        FeatureFormat {
            delta_frames: DEFAULT_DELTA_FRAMES,
            fps: DEFAULT_FPS,
        }
    }
}

fn default_min_count() -> usize {
    1
}
fn default_mode() -> String {
    "full".into()
}
fn default_init_std() -> f64 {
    0.01
}
fn default_recall_thresholds() -> Vec<f64> {
    vec![0.3, 0.5, 0.7, 0.9]
}

/// Every tunable of a run. Only `seed` is mandatory; sections left out take
/// their documented defaults and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default)]
    pub features: FeatureFormat,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub proposal: ProposalConfig,
    #[serde(default)]
    pub caption: CaptionConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dense: DenseCaptionConfig,
    #[serde(default = "default_recall_thresholds")]
    pub recall_thresholds: Vec<f64>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if self.features.delta_frames == 0 || !(self.features.fps > 0.0 && self.features.fps.is_finite()) {
            return Err(Error::Config("features need positive delta_frames and fps".into()));
        }
        ContextMode::from_variant(&self.mode)?;
        self.model(1, None)?.validate()?;
        self.train.validate()?;
        self.dense.validate()?;
        self.retrieval.validate()?;
        if self.recall_thresholds.is_empty() || self.recall_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("recall_thresholds must be nonempty and lie in (0,1]".into()));
        }
        Ok(())
    }

    /// Model configuration for features of width `input_dim`, optionally overriding the mode.
    pub fn model(&self, input_dim: usize, mode: Option<&str>) -> Result<ModelConfig> {
        Ok(ModelConfig {
            proposal: self.proposal.clone(),
            caption: self.caption.clone(),
            mode: ContextMode::from_variant(mode.unwrap_or(&self.mode))?,
            input_dim,
            delta_frames: self.features.delta_frames,
            fps: self.features.fps,
            init_std: self.init_std,
        })
    }
}
