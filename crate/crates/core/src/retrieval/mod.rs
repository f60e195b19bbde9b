//! Video/paragraph retrieval in a learned joint space: sentences are
//! encoded by an LSTM, ground-truth event intervals by the frozen proposal
//! LSTM, both projected and L2-normalized. A paragraph scores a video by
//! the mean over its sentences of the best cosine to any of the video's
//! events.

mod encoder;
mod rank;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encoder::{l2_normalize, EncodedParagraph, EncodedVideo, RetrievalItem, RetrievalModel};
pub use rank::{
    batch_margin_loss, cosine, margin_loss, paragraph_score, rank_eval, rank_of, retrieval_report, score_pair,
    RankMetrics, RetrievalReport,
};
pub use train::{build_items, RetrievalCheckpoint, RetrievalLoss, RetrievalMeta, RetrievalTrainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub joint_dim: usize,
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub margin: f64,
    /// Add the mean past and future neighbours of each item to its projection.
    pub context: bool,
    pub init_std: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            joint_dim: 512,
            embed_dim: 256,
            hidden_size: 512,
            num_layers: 2,
            margin: 0.2,
            context: false,
            init_std: 0.1,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 20,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("retrieval: {m}")));
        if self.joint_dim == 0 || self.embed_dim == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return bad("dimensions and layer count must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be finite and non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 so every item has a negative");
        }
        Ok(())
    }
}
