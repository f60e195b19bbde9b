//! Finite-difference checks on small random instances of every trainable loss.

use std::collections::BTreeMap;

use densecap::captioning::{CaptionConfig, ContextMode};
use densecap::corpus::{build_vocab, generate_synthetic, SyntheticSpec};
use densecap::numerics::{grad_check_ids, GradCheckReport, ParamStore};
use densecap::proposals::ProposalConfig;
use densecap::retrieval::{RetrievalConfig, RetrievalModel, RetrievalTrainer};
use densecap::training::{joint_loss, CaptionSource, ModelConfig, Phase, Pipeline, StepSpec, TrainConfig, TrainingData};
use densecap::Result;
use serde::Serialize;

use crate::{CliError, CliResult, Scope};

pub const TOLERANCE: f64 = 1e-4;
/// Step for the recurrent losses; small gradient components need the largest allowed step.
const EPS: f64 = 1e-4;
/// Step for the retrieval loss, whose max over proposals has kinks.
const RETRIEVAL_EPS: f64 = 1e-5;

#[derive(Serialize)]
struct Entry {
    max_relative_error: f64,
    worst_param: Option<String>,
    worst_analytic: f64,
    worst_numeric: f64,
    components: usize,
}

impl From<GradCheckReport> for Entry {
    fn from(r: GradCheckReport) -> Self {
        Entry {
            max_relative_error: r.max_relative_error,
            worst_param: r.worst_param,
            worst_analytic: r.worst_analytic,
            worst_numeric: r.worst_numeric,
            components: r.components_checked,
        }
    }
}

fn corpus(seed: u64) -> Result<(TrainingData, densecap::corpus::Vocabulary)> {
    let spec = SyntheticSpec {
        duration_s: [8.0, 12.0],
        event_length_s: [2.0, 4.0],
        events_per_video: [2, 3],
        feature_dim: 4,
        ..SyntheticSpec::new(2, seed)
    };
    let c = generate_synthetic(&spec)?;
    let vocab = build_vocab(&c.records, 1)?;
    Ok((TrainingData::new(c.records, c.features, &vocab)?, vocab))
}

fn model(mode: &str, inject: bool) -> Result<ModelConfig> {
    Ok(ModelConfig {
        proposal: ProposalConfig {
            strides: vec![1, 2],
            k: 3,
            hidden_size: 4,
            ..ProposalConfig::default()
        },
        caption: CaptionConfig {
            embed_dim: 3,
            hidden_size: 4,
            num_layers: 2,
            inject_every_step: inject,
        },
        mode: ContextMode::from_variant(mode)?,
        init_std: 0.5,
        ..ModelConfig::new(4)
    })
}

fn joint_check(seed: u64, mode: &str, inject: bool, phase: Phase) -> Result<GradCheckReport> {
    let (data, vocab) = corpus(seed)?;
    let mut pipeline = Pipeline::new(model(mode, inject)?, vocab, seed)?;
    let train = TrainConfig {
        lambda_cap: if phase == Phase::Caption { 1.0 } else { 0.0 },
        ..TrainConfig::default()
    };
    let spec = StepSpec {
        phase,
        mode: pipeline.mode(),
        source: CaptionSource::GroundTruth,
    };
    let ids = match phase {
        Phase::Caption => pipeline.caption_ids(),
        Phase::Proposal => pipeline.proposal_ids(),
    };
    let probe = pipeline.clone();
    let mut store = std::mem::replace(&mut pipeline.store, ParamStore::new(0));
    let mut failure = None;
    let report = grad_check_ids(&mut store, &ids, EPS, |params, grads| {
        match joint_loss(&probe, params, Some(grads), &data.features[0], &data.records[0], &data.sentences[0], &train, spec) {
            Ok(l) => l.map_or(0.0, |l| l.total),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    report
}

fn retrieval_check(seed: u64, context: bool) -> Result<GradCheckReport> {
    let (data, vocab) = corpus(seed)?;
    let pipeline = Pipeline::new(model("none", false)?, vocab, seed)?;
    let cfg = RetrievalConfig {
        joint_dim: 4,
        embed_dim: 3,
        hidden_size: 4,
        num_layers: 2,
        context,
        init_std: 0.5,
        ..RetrievalConfig::default()
    };
    let mut trainer = RetrievalTrainer::new(&pipeline, cfg, seed)?;
    let items = trainer.items(&data.records, &data.features)?;
    let ids = trainer.model.param_ids();
    let m: RetrievalModel = trainer.model.clone();
    let mut failure = None;
    let report = grad_check_ids(&mut trainer.store, &ids, RETRIEVAL_EPS, |params, grads| {
        m.batch_loss(params, Some(grads), &items).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    report
}

/// Runs the checks of `scope`, prints a JSON report and fails if any error exceeds the tolerance.
pub fn run(scope: Scope, seed: u64) -> CliResult<()> {
    let mut results: BTreeMap<String, Entry> = BTreeMap::new();
    if matches!(scope, Scope::All | Scope::Proposals) {
        results.insert("proposals".into(), joint_check(seed, "none", false, Phase::Proposal)?.into());
    }
    if matches!(scope, Scope::All | Scope::Captioning) {
        for mode in ContextMode::VARIANTS {
            for inject in [false, true] {
                let key = format!("captioning/{mode}{}", if inject { "/every-step" } else { "" });
                results.insert(key, joint_check(seed, mode, inject, Phase::Caption)?.into());
            }
        }
    }
    if matches!(scope, Scope::All | Scope::Retrieval) {
        for context in [false, true] {
            let key = format!("retrieval/{}", if context { "context" } else { "no-context" });
            results.insert(key, retrieval_check(seed, context)?.into());
        }
    }
    let max = results.values().map(|e| e.max_relative_error).fold(0.0, f64::max);
    #[derive(Serialize)]
    struct Report {
        max_relative_error: f64,
        tolerance: f64,
        checks: BTreeMap<String, Entry>,
    }
    let report = Report {
        max_relative_error: max,
        tolerance: TOLERANCE,
        checks: results,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(densecap::Error::from)?);
    if max < TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("max relative gradient error {max:e} exceeds {TOLERANCE:e}")))
    }
}
