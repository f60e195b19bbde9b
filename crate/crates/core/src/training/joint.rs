//! The weighted sum of caption and proposal losses for one video.

use serde::{Deserialize, Serialize};

use super::config::{CaptionSource, TrainConfig};
use super::pipeline::Pipeline;
use crate::captioning::ContextMode;
use crate::corpus::{FeatureSequence, VideoRecord};
use crate::error::Result;
use crate::numerics::{Grads, ParamId, Params};
use crate::proposals::{make_targets, rank_order, tiou_unchecked};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Caption,
    Proposal,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Caption => "caption",
            Phase::Proposal => "proposal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    pub caption: f64,
    pub proposal: f64,
}

/// Events the caption term is computed over.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionSet {
    pub hiddens: Vec<Vec<f64>>,
    pub ends: Vec<f64>,
    pub sentences: Vec<Vec<usize>>,
}

/// How one iteration treats its video.
#[derive(Clone, Copy, Debug)]
pub struct StepSpec {
    pub phase: Phase,
    pub mode: ContextMode,
    pub source: CaptionSource,
}

/// Per GT event, the best-ranked stream anchor of maximal tIoU reaching
/// `gate`; GT events without one are dropped.
fn gated_set(
    pipeline: &Pipeline,
    seq: &FeatureSequence,
    record: &VideoRecord,
    sentences: &[Vec<usize>],
    gate: f64,
    passes: &[crate::proposals::BranchPass],
) -> CaptionSet {
    let mut anchors = Vec::new();
    for pass in passes {
        anchors.extend(pipeline.proposal.pass_proposals(pass, seq, true));
    }
    anchors.sort_by(rank_order);
    let mut set = CaptionSet {
        hiddens: Vec::new(),
        ends: Vec::new(),
        sentences: Vec::new(),
    };
    for (event, sentence) in record.events.iter().zip(sentences) {
        let mut best: Option<(usize, f64)> = None;
        for (k, a) in anchors.iter().enumerate() {
            let x = tiou_unchecked(a.interval(), event.interval());
            if x >= gate && best.is_none_or(|(_, b)| x > b) {
                best = Some((k, x));
            }
        }
        if let Some((k, _)) = best {
            set.hiddens.push(anchors[k].h.clone());
            set.ends.push(anchors[k].t_end);
            set.sentences.push(sentence.clone());
        }
    }
    set
}

fn scale_grads(grads: &mut Grads, ids: &[ParamId], factor: f64) {
    for &id in ids {
        grads.get_mut(id).values_mut().iter_mut().for_each(|g| *g *= factor);
    }
}

/// `λ_cap·L_cap + λ_prop·L_prop` for one video. With `grads`, the active
/// phase's module gradients are overwritten with the gradient of its own
/// term; the other term only contributes to the value. Returns `None` when
/// the video offers nothing to caption.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss(
    pipeline: &Pipeline,
    params: &Params,
    grads: Option<&mut Grads>,
    seq: &FeatureSequence,
    record: &VideoRecord,
    sentences: &[Vec<usize>],
    config: &TrainConfig,
    spec: StepSpec,
) -> Result<Option<JointLoss>> {
    if record.events.is_empty() {
        return Ok(None);
    }
    let model = &pipeline.proposal;
    let passes = model.stream_passes(params, seq)?;
    let gt: Vec<(f64, f64)> = record.events.iter().map(|e| e.interval()).collect();
    let targets = make_targets(&gt, seq, model.config())?;

    let mut set = match spec.source {
        CaptionSource::GatedProposals => {
            gated_set(pipeline, seq, record, sentences, config.caption_iou_gate, &passes)
        }
        CaptionSource::GroundTruth => CaptionSet {
            hiddens: Vec::new(),
            ends: Vec::new(),
            sentences: Vec::new(),
        },
    };
    if set.sentences.is_empty() {
        // ground truth, or no proposal reached the gate
        set = CaptionSet {
            hiddens: pipeline.interval_hiddens(params, seq, &gt)?,
            ends: gt.iter().map(|g| g.1).collect(),
            sentences: sentences.to_vec(),
        };
    }

    let mut grads = grads;
    let cap_ids = pipeline.caption_ids();
    let prop_ids = pipeline.proposal_ids();
    let n = set.sentences.len() as f64;
    let mut cap_total = 0.0;
    let caption_active = spec.phase == Phase::Caption && grads.is_some();
    if caption_active {
        grads.as_deref_mut().expect("checked").zero_ids(&cap_ids);
    }
    for i in 0..set.sentences.len() {
        let g = if caption_active { grads.as_deref_mut() } else { None };
        cap_total += pipeline
            .caption
            .event_loss(params, g, i, &set.hiddens, &set.ends, spec.mode, &set.sentences[i])?;
    }
    let l_cap = cap_total / n;

    let proposal_active = spec.phase == Phase::Proposal && grads.is_some();
    if proposal_active {
        grads.as_deref_mut().expect("checked").zero_ids(&prop_ids);
    }
    let g = if proposal_active { grads.as_deref_mut() } else { None };
    let l_prop = model.loss_from_passes(params, g, &passes, &targets)?;

    if let Some(g) = grads {
        match spec.phase {
            Phase::Caption => scale_grads(g, &cap_ids, config.lambda_cap / n),
            Phase::Proposal => scale_grads(g, &prop_ids, config.lambda_prop),
        }
    }
    Ok(Some(JointLoss {
        total: config.lambda_cap * l_cap + config.lambda_prop * l_prop,
        caption: l_cap,
        proposal: l_prop,
    }))
}
