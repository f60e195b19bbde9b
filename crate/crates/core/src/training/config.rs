use serde::{Deserialize, Serialize};

use crate::captioning::{CaptionConfig, ContextMode, ContextScope, Weighting};
use crate::corpus::{DEFAULT_DELTA_FRAMES, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::proposals::ProposalConfig;

/// Where the caption phase takes its events from once warm-up is over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    /// Ground-truth intervals with hiddens from a pass over each interval.
    GroundTruth,
    /// The best stream proposal per ground-truth event reaching the IoU gate.
    GatedProposals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda_cap: f64,
    pub lambda_prop: f64,
    pub lr_caption: f64,
    pub lr_proposal: f64,
    pub momentum: f64,
    /// Per-epoch multiplicative learning-rate decay; 1 disables it.
    pub lr_decay: f64,
    pub alternate_every: u64,
    pub warmup_epochs: u64,
    pub batch_size: usize,
    pub caption_iou_gate: f64,
    pub caption_source: CaptionSource,
    pub max_epochs: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_cap: 1.0,
            lambda_prop: 0.1,
            lr_caption: 1e-2,
            lr_proposal: 1e-3,
            momentum: 0.9,
            lr_decay: 1.0,
            alternate_every: 500,
            warmup_epochs: 10,
            batch_size: 1,
            caption_iou_gate: 0.5,
            caption_source: CaptionSource::GatedProposals,
            max_epochs: 30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("lambda_cap", self.lambda_cap), ("lambda_prop", self.lambda_prop)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if self.lambda_cap == 0.0 && self.lambda_prop == 0.0 {
            return Err(Error::Config("at least one of lambda_cap and lambda_prop must be positive".into()));
        }
        for (name, v) in [("lr_caption", self.lr_caption), ("lr_proposal", self.lr_proposal)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.alternate_every == 0 {
            return Err(Error::Config("alternate_every must be at least 1".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!("batch_size must be 1, got {}", self.batch_size)));
        }
        if !(self.caption_iou_gate > 0.0 && self.caption_iou_gate <= 1.0) {
            return Err(Error::Config(format!("caption_iou_gate {} outside (0,1]", self.caption_iou_gate)));
        }
        Ok(())
    }
}

/// Everything that fixes parameter shapes and the forward computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub proposal: ProposalConfig,
    pub caption: CaptionConfig,
    pub mode: ContextMode,
    pub input_dim: usize,
    /// Feature window: frames per row and frame rate.
    pub delta_frames: u32,
    pub fps: f64,
    pub init_std: f64,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        ModelConfig {
            proposal: ProposalConfig::default(),
            caption: CaptionConfig::default(),
            mode: ContextMode::new(ContextScope::PastAndFuture, Weighting::DotAttention),
            input_dim,
            delta_frames: DEFAULT_DELTA_FRAMES,
            fps: DEFAULT_FPS,
            init_std: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.proposal.validate()?;
        self.caption.validate()?;
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.delta_frames == 0 || !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config("delta_frames and fps must be positive".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config(format!("init_std must be nonnegative, got {}", self.init_std)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        ModelConfig::new(8).validate().unwrap();
        let c = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"alternate_every": 7}"#).unwrap();
        assert_eq!(c.alternate_every, 7);
        assert_eq!(c.lambda_prop, 0.1);
    }
}
