//! Event context, the caption decoder and beam search.

pub mod beam;
pub mod context;
pub mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use beam::{beam_search, greedy_decode, DecodedCaption, StepModel};
pub use context::{
    attention_weights, bucket_events, context_backward, context_vectors, AttentionParams, ContextBundle, ContextMode,
    ContextScope, Weighting,
};
pub use model::{CaptionModel, CaptionStepper};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptionConfig {
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    /// Add the projected context to every word input, not only the first step.
    pub inject_every_step: bool,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        CaptionConfig {
            embed_dim: 256,
            hidden_size: 512,
            num_layers: 2,
            inject_every_step: false,
        }
    }
}

impl CaptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::Config("caption dimensions and layer count must be positive".into()));
        }
        Ok(())
    }
}

/// One entry of the caption dump file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub video_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub proposal_score: f64,
    pub caption: String,
    pub logprob: f64,
}

pub fn captions_to_json(records: &[CaptionRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn parse_captions(text: &str) -> Result<Vec<CaptionRecord>> {
    let records: Vec<CaptionRecord> =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("caption dump: {e}")))?;
    for r in &records {
        if !(r.t_start < r.t_end) {
            return Err(Error::Validation {
                video_id: r.video_id.clone(),
                detail: format!("invalid caption interval [{}, {}]", r.t_start, r.t_end),
            });
        }
    }
    Ok(records)
}
