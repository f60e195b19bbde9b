use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use densecap::captioning::{captions_to_json, parse_captions};
use densecap::corpus::{
    build_vocab, dataset_to_json, feature_path, generate_synthetic, load_dataset, load_features, store_features,
    FeatureSequence, SyntheticSpec, VideoRecord,
};
use densecap::metrics::{dense_report, CaptionMetric, DenseCaptionConfig, DensePrediction};
use densecap::proposals::{parse_proposals, proposals_to_json, recall_curve, ProposalRecord};
use densecap::retrieval::{RetrievalCheckpoint, RetrievalTrainer};
use densecap::training::{
    loss_log_csv, pipeline_from_checkpoint, CaptionInput, Checkpoint, ModelConfig, Pipeline, Trainer, TrainingData,
};
use densecap::{Error, Result};

use crate::config::{FeatureFormat, RunConfig};
use crate::{CliError, CliResult};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn json_out<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn features_for(records: &[VideoRecord], dir: &Path, fmt: &FeatureFormat) -> Result<Vec<FeatureSequence>> {
    records
        .iter()
        .map(|r| load_features(feature_path(dir, &r.id), fmt.delta_frames, fmt.fps))
        .collect()
}

/// Every `*.dvcf` file in `dir`, in file-name order.
fn all_features(dir: &Path, fmt: &FeatureFormat) -> Result<Vec<FeatureSequence>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dvcf"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no .dvcf feature files in {}", dir.display())));
    }
    paths.iter().map(|p| load_features(p, fmt.delta_frames, fmt.fps)).collect()
}

fn model_format(model: &ModelConfig) -> FeatureFormat {
    FeatureFormat {
        delta_frames: model.delta_frames,
        fps: model.fps,
    }
}

pub fn gen_data(spec_path: &Path, out: &Path, test: usize) -> CliResult<()> {
    let spec: SyntheticSpec =
        serde_json::from_str(&read(spec_path)?).map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
    spec.validate()?;
    if test >= spec.n_videos {
        return Err(Error::Config(format!("--test {test} leaves no training videos out of {}", spec.n_videos)).into());
    }
    let corpus = generate_synthetic(&spec)?;
    let split = corpus.records.len() - test;
    write(&out.join("dataset.json"), dataset_to_json(&corpus.records[..split])?)?;
    if test > 0 {
        write(&out.join("test.json"), dataset_to_json(&corpus.records[split..])?)?;
    }
    let dir = out.join("features");
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    for seq in &corpus.features {
        store_features(seq, feature_path(&dir, &seq.video_id))?;
    }
    Ok(())
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub data: PathBuf,
    pub features: PathBuf,
    pub mode: Option<&'static str>,
    pub out: PathBuf,
    pub loss_log: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub iterations: Option<u64>,
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config)?;
    let records = load_dataset(&args.data)?;
    let features = features_for(&records, &args.features, &cfg.features)?;
    let input_dim = features.first().map(FeatureSequence::dim).unwrap_or(1);
    let vocab = build_vocab(&records, cfg.min_count)?;
    let model = cfg.model(input_dim, args.mode)?;
    let data = TrainingData::new(records, features, &vocab)?;
    let mut trainer = match &args.resume {
        Some(path) => Trainer::resume(&Checkpoint::load(path)?, &model, &cfg.train, &vocab, cfg.seed)?,
        None => Trainer::new(model, cfg.train.clone(), vocab, cfg.seed)?,
    };
    let result = match args.iterations {
        Some(total) => {
            let remaining = total.saturating_sub(trainer.iteration());
            trainer.train_iterations(&data, remaining)
        }
        None => trainer.train(&data),
    };
    let log_path = args.loss_log.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    match result {
        Ok(()) => {
            trainer.checkpoint()?.save(&args.out)?;
            write(&log_path, loss_log_csv(trainer.log()))?;
            Ok(())
        }
        Err(Error::Diverged { iteration, checkpoint }) => {
            write(&args.out, &*checkpoint)?;
            write(&log_path, loss_log_csv(trainer.log()))?;
            Err(CliError::Numeric(format!(
                "training diverged at iteration {iteration}; last finite state saved to {}",
                args.out.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_pipeline(path: &Path) -> Result<(Pipeline, FeatureFormat)> {
    let pipeline = pipeline_from_checkpoint(&Checkpoint::load(path)?)?;
    let fmt = model_format(&pipeline.config);
    Ok((pipeline, fmt))
}

pub fn propose(checkpoint: &Path, features: &Path, data: Option<&Path>, retain_all: bool, out: &Path) -> CliResult<()> {
    let (pipeline, fmt) = load_pipeline(checkpoint)?;
    let seqs = match data {
        Some(d) => features_for(&load_dataset(d)?, features, &fmt)?,
        None => all_features(features, &fmt)?,
    };
    let mut dump = Vec::new();
    for seq in &seqs {
        for p in pipeline.propose(seq, retain_all)? {
            dump.push(ProposalRecord::from_proposal(&seq.video_id, &p));
        }
    }
    write(out, proposals_to_json(&dump)? + "\n")?;
    Ok(())
}

pub fn caption(
    checkpoint: &Path,
    features: &Path,
    proposals: Option<&Path>,
    gt: Option<&Path>,
    beam: usize,
    out: &Path,
) -> CliResult<()> {
    if beam == 0 {
        return Err(Error::Config("beam must be at least 1".into()).into());
    }
    let (pipeline, fmt) = load_pipeline(checkpoint)?;
    let mut dump = Vec::new();
    match (proposals, gt) {
        (_, Some(gt)) => {
            let records = load_dataset(gt)?;
            for (rec, seq) in records.iter().zip(features_for(&records, features, &fmt)?) {
                let inputs = pipeline.gt_inputs(&seq, rec)?;
                dump.extend(pipeline.caption_records(&rec.id, &inputs, beam)?);
            }
        }
        (Some(p), None) => {
            let all = parse_proposals(&read(p)?)?;
            let mut by_video: BTreeMap<&str, Vec<ProposalRecord>> = BTreeMap::new();
            for r in &all {
                by_video.entry(r.video_id.as_str()).or_default().push(r.clone());
            }
            for (id, recs) in by_video {
                let seq = load_features(feature_path(features, id), fmt.delta_frames, fmt.fps)?;
                let hiddens = pipeline.hiddens_for_records(&seq, &recs)?;
                let inputs: Vec<_> = recs
                    .iter()
                    .zip(hiddens)
                    .map(|(r, h)| CaptionInput {
                        t_start: r.t_start,
                        t_end: r.t_end,
                        score: r.score,
                        h,
                    })
                    .collect();
                dump.extend(pipeline.caption_records(id, &inputs, beam)?);
            }
        }
        (None, None) => return Err(Error::Input("caption needs --proposals or --gt".into()).into()),
    }
    write(out, captions_to_json(&dump)? + "\n")?;
    Ok(())
}

pub fn eval_dense(captions: &Path, gt: &Path, metric: &str, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let dense = match config {
        Some(c) => RunConfig::load(c)?.dense,
        None => DenseCaptionConfig::default(),
    };
    let metrics = if metric == "all" {
        CaptionMetric::ALL.to_vec()
    } else {
        vec![CaptionMetric::parse(metric)?]
    };
    let preds: Vec<DensePrediction> = parse_captions(&read(captions)?)?.iter().map(DensePrediction::from).collect();
    let records = load_dataset(gt)?;
    json_out(out, &dense_report(&preds, &records, &dense, &metrics)?)?;
    Ok(())
}

/// Intervals and scores of either a proposal dump or a caption dump.
fn ranked_intervals(text: &str) -> Result<Vec<(String, f64, f64, f64, f64)>> {
    if let Ok(props) = parse_proposals(text) {
        return Ok(props
            .into_iter()
            .map(|p| (p.video_id, p.score, p.t_start, p.t_end, p.t_end - p.t_start))
            .collect());
    }
    let caps = parse_captions(text)
        .map_err(|e| Error::Schema(format!("neither a proposal nor a caption dump: {e}")))?;
    Ok(caps
        .into_iter()
        .map(|c| (c.video_id, c.proposal_score, c.t_start, c.t_end, c.t_end - c.t_start))
        .collect())
}

pub fn eval_recall(proposals: &Path, gt: &Path, max_n: usize, thresholds: &[f64], out: &Path) -> CliResult<()> {
    let records = load_dataset(gt)?;
    let mut by_video: BTreeMap<String, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
    for (id, score, s, e, len) in ranked_intervals(&read(proposals)?)? {
        by_video.entry(id).or_default().push((score, s, e, len));
    }
    if let Some(id) = by_video.keys().find(|id| !records.iter().any(|r| &r.id == *id)) {
        return Err(Error::Input(format!("proposals for unknown video {id}")).into());
    }
    let ranked: Vec<Vec<(f64, f64)>> = records
        .iter()
        .map(|r| {
            let mut v = by_video.remove(&r.id).unwrap_or_default();
            v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.3.total_cmp(&b.3)));
            v.into_iter().map(|(_, s, e, _)| (s, e)).collect()
        })
        .collect();
    let truth: Vec<Vec<(f64, f64)>> = records.iter().map(|r| r.events.iter().map(|e| e.interval()).collect()).collect();
    write(out, recall_curve(&ranked, &truth, max_n, thresholds)?.to_csv())?;
    Ok(())
}

pub fn train_retrieval(
    config: &Path,
    checkpoint: &Path,
    data: &Path,
    features: &Path,
    context: bool,
    out: &Path,
) -> CliResult<()> {
    let cfg = RunConfig::load(config)?;
    let (pipeline, fmt) = load_pipeline(checkpoint)?;
    let records = load_dataset(data)?;
    let seqs = features_for(&records, features, &fmt)?;
    let mut rcfg = cfg.retrieval.clone();
    rcfg.context |= context;
    let mut trainer = RetrievalTrainer::new(&pipeline, rcfg, cfg.seed)?;
    let items = trainer.items(&records, &seqs)?;
    trainer.train(&items)?;
    trainer.checkpoint().save(out)?;
    Ok(())
}

pub fn eval_retrieval(checkpoint: &Path, data: &Path, features: &Path, out: &Path) -> CliResult<()> {
    let ck = RetrievalCheckpoint::load(checkpoint)?;
    let trainer = RetrievalTrainer::from_checkpoint(&ck)?;
    let fmt = model_format(trainer.dense_config());
    let records = load_dataset(data)?;
    let seqs = features_for(&records, features, &fmt)?;
    let items = trainer.items(&records, &seqs)?;
    json_out(out, &trainer.evaluate(&items)?)?;
    Ok(())
}
