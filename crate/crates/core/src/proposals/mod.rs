//! Multi-stride event proposals, their training targets and localization recall.

pub mod model;
pub mod recall;
pub mod targets;
pub mod tiou;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{anchor_interval, rank_order, sample_stride, BranchPass, ProposalModel, StrideBranch};
pub use recall::{recall_curve, RecallTable};
pub use targets::{make_targets, positive_weight, proposal_loss, proposal_loss_logits, StrideTargets};
pub use tiou::{tiou, tiou_unchecked};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    pub strides: Vec<usize>,
    pub k: usize,
    pub hidden_size: usize,
    pub score_threshold: f64,
    pub tiou_positive: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            strides: vec![1, 2, 4, 8],
            k: 8,
            hidden_size: 512,
            score_threshold: 0.5,
            tiou_positive: 0.5,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() || self.strides[0] == 0 {
            return Err(Error::Config("strides must be a nonempty list of positive integers".into()));
        }
        if self.strides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("strides {:?} must be strictly increasing", self.strides)));
        }
        if self.k == 0 || self.hidden_size == 0 {
            return Err(Error::Config("K and hidden_size must be at least 1".into()));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return Err(Error::Config(format!("score_threshold {} outside (0,1)", self.score_threshold)));
        }
        if !(self.tiou_positive > 0.0 && self.tiou_positive <= 1.0) {
            return Err(Error::Config(format!("tiou_positive {} outside (0,1]", self.tiou_positive)));
        }
        Ok(())
    }
}

/// A scored candidate interval with the proposal-LSTM hidden state at its
/// emission step.
#[derive(Clone, Debug, PartialEq)]
pub struct EventProposal {
    pub t_start: f64,
    pub t_end: f64,
    pub score: f64,
    pub h: Vec<f64>,
    pub stride: usize,
    pub step: usize,
    /// 1-based length index within the stride's `K` anchors.
    pub anchor: usize,
}

impl EventProposal {
    pub fn interval(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }
}

/// One entry of the proposal dump file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub video_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub score: f64,
    pub stride: usize,
}

impl ProposalRecord {
    pub fn from_proposal(video_id: &str, p: &EventProposal) -> Self {
        ProposalRecord {
            video_id: video_id.to_string(),
            t_start: p.t_start,
            t_end: p.t_end,
            score: p.score,
            stride: p.stride,
        }
    }
}

pub fn proposals_to_json(records: &[ProposalRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn parse_proposals(text: &str) -> Result<Vec<ProposalRecord>> {
    let records: Vec<ProposalRecord> =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("proposal dump: {e}")))?;
    for r in &records {
        if !(r.t_start < r.t_end) || !(0.0..=1.0).contains(&r.score) {
            return Err(Error::Validation {
                video_id: r.video_id.clone(),
                detail: format!("invalid proposal [{}, {}] score {}", r.t_start, r.t_end, r.score),
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ProposalConfig::default().validate().is_ok());
        let bad = |f: fn(&mut ProposalConfig)| {
            let mut c = ProposalConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.strides = vec![2, 1]));
        assert!(bad(|c| c.strides = vec![1, 1]));
        assert!(bad(|c| c.strides = vec![]));
        assert!(bad(|c| c.k = 0));
        assert!(bad(|c| c.score_threshold = 1.0));
    }

    #[test]
    fn dump_round_trip() {
        let recs = vec![ProposalRecord {
            video_id: "v1".into(),
            t_start: 0.5,
            t_end: 2.25,
            score: 0.75,
            stride: 2,
        }];
        assert_eq!(parse_proposals(&proposals_to_json(&recs).unwrap()).unwrap(), recs);
        assert!(parse_proposals(r#"[{"video_id":"v","t_start":2,"t_end":1,"score":0.5,"stride":1}]"#).is_err());
        assert!(parse_proposals(r#"[{"video_id":"v"}]"#).is_err());
    }
}
