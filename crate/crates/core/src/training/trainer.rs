//! Alternating single-video SGD with context-masked warm-up.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::checkpoint::{config_hash, Checkpoint, CheckpointMeta};
use super::config::{CaptionSource, ModelConfig, TrainConfig};
use super::joint::{joint_loss, Phase, StepSpec};
use super::pipeline::Pipeline;
use crate::corpus::{FeatureSequence, VideoRecord, Vocabulary, MAX_SENTENCE_LEN};
use crate::error::{Error, Result};
use crate::numerics::{sgd_momentum_step, OptimizerState, ParamId, SeededRng, Tensor};

/// Label of the video-order stream derived from the run seed.
const ORDER_STREAM: u64 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub phase: Phase,
    pub loss: f64,
    pub caption_loss: f64,
    pub proposal_loss: f64,
}

/// `iteration,phase,loss` rows.
pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut out = String::from("iteration,phase,loss\n");
    for r in log {
        writeln!(out, "{},{},{}", r.iteration, r.phase.name(), r.loss).expect("write to string");
    }
    out
}

/// Videos with their features and encoded sentences, aligned by index.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub records: Vec<VideoRecord>,
    pub features: Vec<FeatureSequence>,
    pub sentences: Vec<Vec<Vec<usize>>>,
}

impl TrainingData {
    /// Pair each record with the feature sequence of the same id.
    pub fn new(records: Vec<VideoRecord>, features: Vec<FeatureSequence>, vocab: &Vocabulary) -> Result<Self> {
        let mut by_id: HashMap<String, FeatureSequence> =
            features.into_iter().map(|f| (f.video_id.clone(), f)).collect();
        let features = records
            .iter()
            .map(|r| {
                by_id
                    .remove(&r.id)
                    .ok_or_else(|| Error::Input(format!("no feature sequence for video {}", r.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let sentences = records
            .iter()
            .map(|r| r.events.iter().map(|e| vocab.encode(&e.sentence, MAX_SENTENCE_LEN)).collect())
            .collect();
        Ok(TrainingData {
            records,
            features,
            sentences,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        TrainingData {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub pipeline: Pipeline,
    pub config: TrainConfig,
    seed: u64,
    opt_caption: OptimizerState,
    opt_proposal: OptimizerState,
    iteration: u64,
    epoch: u64,
    position: usize,
    order: Vec<usize>,
    rng: SeededRng,
    log: Vec<LossRecord>,
}

impl Trainer {
    pub fn new(model: ModelConfig, train: TrainConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        train.validate()?;
        let pipeline = Pipeline::new(model, vocab, seed)?;
        let opt_caption = OptimizerState::new(&pipeline.store, pipeline.caption_ids(), train.lr_caption, train.momentum)?;
        let opt_proposal =
            OptimizerState::new(&pipeline.store, pipeline.proposal_ids(), train.lr_proposal, train.momentum)?;
        Ok(Trainer {
            pipeline,
            config: train,
            seed,
            opt_caption,
            opt_proposal,
            iteration: 0,
            epoch: 0,
            position: 0,
            order: Vec::new(),
            rng: SeededRng::derive(seed, ORDER_STREAM),
            log: Vec::new(),
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn log(&self) -> &[LossRecord] {
        &self.log
    }

    pub fn phase(&self) -> Phase {
        if (self.iteration / self.config.alternate_every) % 2 == 0 {
            Phase::Caption
        } else {
            Phase::Proposal
        }
    }

    pub fn in_warmup(&self) -> bool {
        self.epoch < self.config.warmup_epochs
    }

    fn step_spec(&self) -> StepSpec {
        let warm = self.in_warmup();
        StepSpec {
            phase: self.phase(),
            mode: if warm { self.pipeline.mode().masked() } else { self.pipeline.mode() },
            source: if warm { CaptionSource::GroundTruth } else { self.config.caption_source },
        }
    }

    /// Run one iteration (one video). Returns `None` when the video was skipped.
    pub fn step(&mut self, data: &TrainingData) -> Result<Option<LossRecord>> {
        if data.is_empty() {
            return Err(Error::Input("training data is empty".into()));
        }
        if self.position == 0 {
            self.order = (0..data.len()).collect();
            self.rng.shuffle(&mut self.order);
        }
        if self.order.len() != data.len() {
            return Err(Error::Input(format!(
                "training data has {} videos but the run was started with {}",
                data.len(),
                self.order.len()
            )));
        }
        let v = self.order[self.position];
        let spec = self.step_spec();
        let decay = self.config.lr_decay.powi(self.epoch.min(i32::MAX as u64) as i32);
        self.opt_caption.set_learning_rate(self.config.lr_caption * decay)?;
        self.opt_proposal.set_learning_rate(self.config.lr_proposal * decay)?;

        let mut grads = std::mem::take(self.pipeline.store.grads_mut());
        let result = joint_loss(
            &self.pipeline,
            self.pipeline.store.params(),
            Some(&mut grads),
            &data.features[v],
            &data.records[v],
            &data.sentences[v],
            &self.config,
            spec,
        );
        *self.pipeline.store.grads_mut() = grads;
        let record = match result? {
            None => {
                self.advance(data.len());
                return Ok(None);
            }
            Some(l) => LossRecord {
                iteration: self.iteration,
                epoch: self.epoch,
                phase: spec.phase,
                loss: l.total,
                caption_loss: l.caption,
                proposal_loss: l.proposal,
            },
        };
        if !record.loss.is_finite() {
            return Err(self.diverged());
        }
        let opt = match spec.phase {
            Phase::Caption => &mut self.opt_caption,
            Phase::Proposal => &mut self.opt_proposal,
        };
        let ids: Vec<ParamId> = opt.ids().to_vec();
        let before: Vec<Tensor> = ids.iter().map(|&id| self.pipeline.store.value(id).clone()).collect();
        let velocity_before = opt.velocity().to_vec();
        if let Err(e) = sgd_momentum_step(&mut self.pipeline.store, opt) {
            return Err(if e.is_numeric() { self.diverged() } else { e });
        }
        if ids.iter().any(|&id| !self.pipeline.store.value(id).is_finite()) {
            for (id, t) in ids.iter().zip(before) {
                self.pipeline.store.set_value(*id, t)?;
            }
            let opt = match spec.phase {
                Phase::Caption => &mut self.opt_caption,
                Phase::Proposal => &mut self.opt_proposal,
            };
            for (k, t) in velocity_before.into_iter().enumerate() {
                opt.set_velocity(k, t)?;
            }
            return Err(self.diverged());
        }
        self.log.push(record.clone());
        self.iteration += 1;
        self.advance(data.len());
        Ok(Some(record))
    }

    fn advance(&mut self, n: usize) {
        self.position += 1;
        if self.position == n {
            self.position = 0;
            self.epoch += 1;
        }
    }

    fn diverged(&self) -> Error {
        let checkpoint = self
            .checkpoint()
            .and_then(|c| c.to_bytes())
            .unwrap_or_default();
        Error::Diverged {
            iteration: self.iteration,
            checkpoint: Box::new(checkpoint),
        }
    }

    /// Train until `max_epochs` epochs are complete.
    pub fn train(&mut self, data: &TrainingData) -> Result<()> {
        while self.epoch < self.config.max_epochs {
            self.step(data)?;
        }
        Ok(())
    }

    /// Run exactly `n` more iterations, ignoring the epoch budget.
    pub fn train_iterations(&mut self, data: &TrainingData, n: u64) -> Result<()> {
        let target = self.iteration + n;
        while self.iteration < target {
            self.step(data)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let store = &self.pipeline.store;
        let mut tensors: Vec<(String, Tensor)> = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.value(id).clone()))
            .collect();
        for opt in [&self.opt_caption, &self.opt_proposal] {
            for (id, v) in opt.ids().iter().zip(opt.velocity()) {
                tensors.push((format!("velocity/{}", store.name(*id)), v.clone()));
            }
        }
        let p = &self.pipeline;
        Ok(Checkpoint {
            meta: CheckpointMeta {
                model: p.config.clone(),
                train: self.config.clone(),
                vocab: p.vocab.clone(),
                seed: self.seed,
                config_hash: config_hash(&p.config, &self.config, &p.vocab, self.seed)?,
                iteration: self.iteration,
                epoch: self.epoch,
                position: self.position,
                order: self.order.clone(),
                rng: self.rng.state(),
                log: self.log.clone(),
            },
            tensors,
        })
    }

    /// Rebuild a trainer from a checkpoint. The epoch budget may differ
    /// from the stored one; everything else is taken from the checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint, max_epochs: Option<u64>) -> Result<Self> {
        let m = &ck.meta;
        let mut train = m.train.clone();
        if let Some(e) = max_epochs {
            train.max_epochs = e;
        }
        let mut t = Trainer::new(m.model.clone(), train, m.vocab.clone(), m.seed)?;
        load_params(&mut t.pipeline, ck)?;
        for opt in [&mut t.opt_caption, &mut t.opt_proposal] {
            let names: Vec<String> = opt.ids().iter().map(|&id| t.pipeline.store.name(id).to_string()).collect();
            for (k, name) in names.iter().enumerate() {
                let key = format!("velocity/{name}");
                let v = ck
                    .tensor(&key)
                    .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks {key}")))?;
                opt.set_velocity(k, v.clone())
                    .map_err(|_| Error::Incompatible(format!("{key} has the wrong shape")))?;
            }
        }
        t.iteration = m.iteration;
        t.epoch = m.epoch;
        t.position = m.position;
        t.order = m.order.clone();
        t.rng = SeededRng::from_state(m.rng);
        t.log = m.log.clone();
        Ok(t)
    }

    /// [`Trainer::from_checkpoint`] after checking the checkpoint was made
    /// with the given configuration, vocabulary and seed.
    pub fn resume(
        ck: &Checkpoint,
        model: &ModelConfig,
        train: &TrainConfig,
        vocab: &Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        if vocab.len() != ck.meta.vocab.len() {
            return Err(Error::Incompatible(format!(
                "vocabulary size {} does not match the checkpoint's {}",
                vocab.len(),
                ck.meta.vocab.len()
            )));
        }
        if config_hash(model, train, vocab, seed)? != ck.meta.config_hash {
            return Err(Error::Incompatible("configuration differs from the checkpoint's".into()));
        }
        Self::from_checkpoint(ck, Some(train.max_epochs))
    }
}

/// Overwrite every parameter of `pipeline` with the checkpoint's tensor of the same name.
pub fn load_params(pipeline: &mut Pipeline, ck: &Checkpoint) -> Result<()> {
    let store = &mut pipeline.store;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let t = ck
            .tensor(&name)
            .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks parameter {name}")))?;
        if !t.same_dims(store.value(id)) {
            return Err(Error::Incompatible(format!(
                "parameter {name} has dims {:?} in the checkpoint, expected {:?}",
                t.dims(),
                store.value(id).dims()
            )));
        }
        store.set_value(id, t.clone())?;
    }
    Ok(())
}

/// Inference pipeline stored in a checkpoint.
pub fn pipeline_from_checkpoint(ck: &Checkpoint) -> Result<Pipeline> {
    let mut p = Pipeline::new(ck.meta.model.clone(), ck.meta.vocab.clone(), ck.meta.seed)?;
    load_params(&mut p, ck)?;
    Ok(p)
}
