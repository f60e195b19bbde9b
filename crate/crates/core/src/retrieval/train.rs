use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{RetrievalItem, RetrievalModel};
use super::rank::{retrieval_report, RetrievalReport};
use super::RetrievalConfig;
use crate::corpus::{FeatureSequence, VideoRecord, Vocabulary, MAX_SENTENCE_LEN};
use crate::error::{Error, Result};
use crate::numerics::{sgd_momentum_step, OptimizerState, ParamStore, SeededRng, Tensor};
use crate::proposals::ProposalModel;
use crate::training::checkpoint::{decode_container, encode_container};
use crate::training::{ModelConfig, Pipeline};

const MAGIC: &[u8; 4] = b"DVRT";
const VERSION: u32 = 1;
const INIT_STREAM: u64 = 31;
const ORDER_STREAM: u64 = 32;

/// Items for `records`, encoding each ground-truth event with the proposal
/// LSTM hidden over its interval.
pub fn build_items(
    dense_window: (u32, f64),
    proposal: &ProposalModel,
    store: &ParamStore,
    vocab: &Vocabulary,
    records: &[VideoRecord],
    features: &[FeatureSequence],
) -> Result<Vec<RetrievalItem>> {
    if records.len() != features.len() {
        return Err(Error::Input(format!(
            "{} records but {} feature files",
            records.len(),
            features.len()
        )));
    }
    records
        .iter()
        .zip(features)
        .map(|(rec, seq)| {
            if rec.id != seq.video_id {
                return Err(Error::Validation {
                    video_id: rec.id.clone(),
                    detail: format!("paired with features of {}", seq.video_id),
                });
            }
            if seq.delta_frames != dense_window.0 || seq.fps != dense_window.1 {
                return Err(Error::Input(format!(
                    "{} has a {}-frame window at {} fps but the model expects {} at {}",
                    seq.video_id, seq.delta_frames, seq.fps, dense_window.0, dense_window.1
                )));
            }
            let proposals = rec
                .events
                .iter()
                .map(|e| proposal.hidden_over_interval(store.params(), seq, e.t_start, e.t_end))
                .collect::<Result<Vec<_>>>()?;
            let ends: Vec<f64> = rec.events.iter().map(|e| e.t_end).collect();
            let sentences = rec
                .events
                .iter()
                .map(|e| {
                    let mut s = vocab.encode(&e.sentence, MAX_SENTENCE_LEN);
                    s.pop();
                    s
                })
                .collect();
            let item = RetrievalItem {
                video_id: rec.id.clone(),
                proposals,
                proposal_ends: ends.clone(),
                sentences,
                sentence_ends: ends,
            };
            item.validate()?;
            Ok(item)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalLoss {
    pub epoch: u64,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalMeta {
    pub config: RetrievalConfig,
    /// Dense model whose proposal module encodes events.
    pub model: ModelConfig,
    pub vocab: Vocabulary,
    pub seed: u64,
    pub log: Vec<RetrievalLoss>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalCheckpoint {
    pub meta: RetrievalMeta,
    pub tensors: Vec<(String, Tensor)>,
}

impl RetrievalCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_container(MAGIC, VERSION, &serde_json::to_vec(&self.meta)?, &self.tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, tensors) = decode_container(bytes, MAGIC, VERSION)?;
        let meta = serde_json::from_slice(meta)
            .map_err(|e| Error::Incompatible(format!("retrieval checkpoint metadata: {e}")))?;
        Ok(RetrievalCheckpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Retrieval encoders trained on top of a frozen proposal LSTM.
#[derive(Clone, Debug)]
pub struct RetrievalTrainer {
    pub store: ParamStore,
    pub proposal: ProposalModel,
    pub model: RetrievalModel,
    pub vocab: Vocabulary,
    dense: ModelConfig,
    config: RetrievalConfig,
    optimizer: OptimizerState,
    seed: u64,
    rng: SeededRng,
    epoch: u64,
    log: Vec<RetrievalLoss>,
}

impl RetrievalTrainer {
    /// Fresh encoders over the proposal module of `pipeline`.
    pub fn new(pipeline: &Pipeline, config: RetrievalConfig, seed: u64) -> Result<Self> {
        let tensors = pipeline
            .proposal_ids()
            .into_iter()
            .map(|id| (pipeline.store.name(id).to_string(), pipeline.store.value(id).clone()))
            .collect();
        Self::build(tensors, pipeline.config.clone(), pipeline.vocab.clone(), config, seed)
    }

    fn build(
        proposal_tensors: Vec<(String, Tensor)>,
        dense: ModelConfig,
        vocab: Vocabulary,
        config: RetrievalConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(SeededRng::derive(seed, INIT_STREAM).state().seed);
        for (name, t) in proposal_tensors {
            store.register(&name, t)?;
        }
        let proposal = ProposalModel::attach(&store, &dense.proposal, dense.input_dim)?;
        let model = RetrievalModel::register(&mut store, &config, vocab.len(), proposal.hidden_size())?;
        let optimizer = OptimizerState::new(&store, model.param_ids(), config.learning_rate, config.momentum)?;
        Ok(RetrievalTrainer {
            store,
            proposal,
            model,
            vocab,
            dense,
            config,
            optimizer,
            seed,
            rng: SeededRng::derive(seed, ORDER_STREAM),
            epoch: 0,
            log: Vec::new(),
        })
    }

    pub fn from_checkpoint(ck: &RetrievalCheckpoint) -> Result<Self> {
        let m = &ck.meta;
        let proposal_tensors = ck.tensors.iter().filter(|(n, _)| n.starts_with("proposal.")).cloned().collect();
        let mut t = Self::build(proposal_tensors, m.model.clone(), m.vocab.clone(), m.config.clone(), m.seed)?;
        for id in t.model.param_ids() {
            let name = t.store.name(id).to_string();
            let value = ck
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Incompatible(format!("retrieval checkpoint lacks {name}")))?;
            if !value.same_dims(t.store.value(id)) {
                return Err(Error::Incompatible(format!("parameter {name} has dims {:?}", value.dims())));
            }
            t.store.set_value(id, value)?;
        }
        t.log = m.log.clone();
        t.epoch = m.config.epochs;
        Ok(t)
    }

    pub fn checkpoint(&self) -> RetrievalCheckpoint {
        RetrievalCheckpoint {
            meta: RetrievalMeta {
                config: self.config.clone(),
                model: self.dense.clone(),
                vocab: self.vocab.clone(),
                seed: self.seed,
                log: self.log.clone(),
            },
            tensors: self
                .store
                .ids()
                .map(|id| (self.store.name(id).to_string(), self.store.value(id).clone()))
                .collect(),
        }
    }

    /// Configuration of the dense model supplying the proposal encoder.
    pub fn dense_config(&self) -> &ModelConfig {
        &self.dense
    }

    pub fn log(&self) -> &[RetrievalLoss] {
        &self.log
    }

    pub fn items(&self, records: &[VideoRecord], features: &[FeatureSequence]) -> Result<Vec<RetrievalItem>> {
        build_items((self.dense.delta_frames, self.dense.fps), &self.proposal, &self.store, &self.vocab, records, features)
    }

    /// Batches of `batch_size` in a seeded order; a lone trailing item joins the previous batch.
    fn batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut order);
        let mut out: Vec<Vec<usize>> = order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect();
        if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
            let last = out.pop().expect("nonempty");
            out.last_mut().expect("nonempty").extend(last);
        }
        out
    }

    /// Runs the remaining epochs of the configured budget.
    pub fn train(&mut self, items: &[RetrievalItem]) -> Result<()> {
        if items.len() < 2 {
            return Err(Error::Input("retrieval training needs at least two videos".into()));
        }
        while self.epoch < self.config.epochs {
            for (b, batch) in self.batches(items.len()).into_iter().enumerate() {
                let chosen: Vec<RetrievalItem> = batch.iter().map(|&i| items[i].clone()).collect();
                let ids = self.model.param_ids();
                self.store.grads_mut().zero_ids(&ids);
                let (params, grads) = self.store.split_mut();
                let loss = self.model.batch_loss(params, Some(grads), &chosen)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric {
                        name: "retrieval loss".into(),
                        detail: format!("non-finite loss at epoch {} batch {b}", self.epoch),
                    });
                }
                sgd_momentum_step(&mut self.store, &mut self.optimizer)?;
                self.log.push(RetrievalLoss {
                    epoch: self.epoch,
                    batch: b,
                    loss,
                });
            }
            self.epoch += 1;
        }
        Ok(())
    }

    pub fn score_matrix(&self, items: &[RetrievalItem]) -> Result<Vec<Vec<f64>>> {
        self.model.score_matrix(self.store.params(), items)
    }

    pub fn evaluate(&self, items: &[RetrievalItem]) -> Result<RetrievalReport> {
        retrieval_report(&self.score_matrix(items)?)
    }
}
