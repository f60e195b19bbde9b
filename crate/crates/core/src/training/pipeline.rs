//! Proposal and caption models sharing one parameter store.

use super::config::ModelConfig;
use crate::captioning::{context_vectors, CaptionModel, CaptionRecord, ContextMode, DecodedCaption};
use crate::corpus::{FeatureSequence, VideoRecord, Vocabulary, MAX_SENTENCE_LEN};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Params, SeededRng};
use crate::proposals::{EventProposal, ProposalModel, ProposalRecord};

/// Label of the parameter-initialization stream derived from the run seed.
const INIT_STREAM: u64 = 11;

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub proposal: ProposalModel,
    pub caption: CaptionModel,
}

/// One event to caption: interval, ranking score and representation.
#[derive(Clone, Debug)]
pub struct CaptionInput {
    pub t_start: f64,
    pub t_end: f64,
    pub score: f64,
    pub h: Vec<f64>,
}

impl Pipeline {
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let init_seed = SeededRng::derive(seed, INIT_STREAM).state().seed;
        let mut store = ParamStore::new(init_seed);
        let proposal = ProposalModel::register(&mut store, &config.proposal, config.input_dim, config.init_std)?;
        let caption = CaptionModel::register(
            &mut store,
            &config.caption,
            vocab.len(),
            config.proposal.hidden_size,
            config.init_std,
        )?;
        Ok(Pipeline {
            config,
            vocab,
            store,
            proposal,
            caption,
        })
    }

    pub fn params(&self) -> &Params {
        self.store.params()
    }

    pub fn proposal_ids(&self) -> Vec<ParamId> {
        self.proposal.param_ids()
    }

    pub fn caption_ids(&self) -> Vec<ParamId> {
        self.caption.param_ids()
    }

    pub fn mode(&self) -> ContextMode {
        self.config.mode
    }

    fn check_features(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.delta_frames != self.config.delta_frames || seq.fps != self.config.fps {
            return Err(Error::Input(format!(
                "{} has a {}-frame window at {} fps but the model expects {} at {}",
                seq.video_id, seq.delta_frames, seq.fps, self.config.delta_frames, self.config.fps
            )));
        }
        if seq.dim() != self.config.input_dim {
            return Err(Error::shape(
                "features",
                format!(
                    "model expects D={} but {} has D={}",
                    self.config.input_dim,
                    seq.video_id,
                    seq.dim()
                ),
            ));
        }
        Ok(())
    }

    /// Interval hiddens for each `(start, end)`.
    pub fn interval_hiddens(&self, params: &Params, seq: &FeatureSequence, intervals: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
        self.check_features(seq)?;
        intervals
            .iter()
            .map(|&(s, e)| self.proposal.hidden_over_interval(params, seq, s, e))
            .collect()
    }

    /// Ranked proposals; all anchors with `retain_all`, else those over the score threshold.
    pub fn propose(&self, seq: &FeatureSequence, retain_all: bool) -> Result<Vec<EventProposal>> {
        self.check_features(seq)?;
        self.proposal.propose_stream(self.params(), seq, retain_all)
    }

    /// Hidden states for externally supplied proposals: the stream hidden
    /// of the matching anchor when one exists, else an interval pass.
    pub fn hiddens_for_records(&self, seq: &FeatureSequence, records: &[ProposalRecord]) -> Result<Vec<Vec<f64>>> {
        self.check_features(seq)?;
        let params = self.params();
        let passes = self.proposal.stream_passes(params, seq)?;
        let w = seq.window_seconds();
        records
            .iter()
            .map(|r| {
                let step = ((r.t_end / w - 1.0) / r.stride.max(1) as f64).round();
                let anchored = (step >= 0.0)
                    .then(|| self.proposal.hidden_at(&passes, r.stride, step as usize))
                    .flatten();
                let on_grid = ((step * r.stride as f64 + 1.0) * w - r.t_end).abs() < 1e-6;
                match anchored {
                    Some(h) if on_grid => Ok(h),
                    _ => self.proposal.hidden_over_interval(params, seq, r.t_start, r.t_end),
                }
            })
            .collect()
    }

    /// Decode a caption for every input, each conditioned on the others as context.
    pub fn caption_events(&self, inputs: &[CaptionInput], beam: usize) -> Result<Vec<DecodedCaption>> {
        let params = self.params();
        let hiddens: Vec<Vec<f64>> = inputs.iter().map(|x| x.h.clone()).collect();
        let ends: Vec<f64> = inputs.iter().map(|x| x.t_end).collect();
        (0..inputs.len())
            .map(|i| {
                let bundle = context_vectors(i, &hiddens, &ends, params, &self.caption.attn, self.config.mode)?;
                self.caption.beam_decode(params, &bundle, beam, MAX_SENTENCE_LEN)
            })
            .collect()
    }

    pub fn caption_records(&self, video_id: &str, inputs: &[CaptionInput], beam: usize) -> Result<Vec<CaptionRecord>> {
        let decoded = self.caption_events(inputs, beam)?;
        Ok(inputs
            .iter()
            .zip(decoded)
            .map(|(x, d)| CaptionRecord {
                video_id: video_id.to_string(),
                t_start: x.t_start,
                t_end: x.t_end,
                proposal_score: x.score,
                caption: self.vocab.decode(&d.tokens).join(" "),
                logprob: d.logprob,
            })
            .collect())
    }

    /// Caption inputs for the ground-truth events of `record`, score 1.
    pub fn gt_inputs(&self, seq: &FeatureSequence, record: &VideoRecord) -> Result<Vec<CaptionInput>> {
        let intervals: Vec<(f64, f64)> = record.events.iter().map(|e| e.interval()).collect();
        let hiddens = self.interval_hiddens(self.params(), seq, &intervals)?;
        Ok(intervals
            .into_iter()
            .zip(hiddens)
            .map(|((s, e), h)| CaptionInput {
                t_start: s,
                t_end: e,
                score: 1.0,
                h,
            })
            .collect())
    }

    pub fn proposal_inputs(proposals: &[EventProposal]) -> Vec<CaptionInput> {
        proposals
            .iter()
            .map(|p| CaptionInput {
                t_start: p.t_start,
                t_end: p.t_end,
                score: p.score,
                h: p.h.clone(),
            })
            .collect()
    }
}
