//! Held-out caption perplexity and CIDEr on ground-truth events.

use super::pipeline::Pipeline;
use super::trainer::TrainingData;
use crate::captioning::{context_vectors, CaptionRecord};
use crate::corpus::{tokenize, EOS};
use crate::error::{Error, Result};
use crate::metrics::cider;

/// `exp` of the mean per-token negative log-likelihood (EOS included) of
/// the ground-truth sentences, conditioned on ground-truth events.
pub fn caption_perplexity(pipeline: &Pipeline, data: &TrainingData) -> Result<f64> {
    let params = pipeline.params();
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for v in 0..data.len() {
        let inputs = pipeline.gt_inputs(&data.features[v], &data.records[v])?;
        let hiddens: Vec<Vec<f64>> = inputs.iter().map(|x| x.h.clone()).collect();
        let ends: Vec<f64> = inputs.iter().map(|x| x.t_end).collect();
        for (i, sentence) in data.sentences[v].iter().enumerate() {
            let bundle = context_vectors(i, &hiddens, &ends, params, &pipeline.caption.attn, pipeline.mode())?;
            let (loss, _) = pipeline.caption.caption_loss(params, None, &bundle, sentence)?;
            let n = sentence.iter().position(|&t| t == EOS).map_or(sentence.len(), |p| p + 1);
            nll += loss * n as f64;
            tokens += n;
        }
    }
    if tokens == 0 {
        return Err(Error::Input("perplexity needs at least one sentence".into()));
    }
    Ok((nll / tokens as f64).exp())
}

/// Captions for every ground-truth event, in video then event order.
pub fn gt_caption_records(pipeline: &Pipeline, data: &TrainingData, beam: usize) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for v in 0..data.len() {
        let inputs = pipeline.gt_inputs(&data.features[v], &data.records[v])?;
        out.extend(pipeline.caption_records(&data.records[v].id, &inputs, beam)?);
    }
    Ok(out)
}

/// Corpus CIDEr of ground-truth-event captions against their sentences.
pub fn gt_cider(pipeline: &Pipeline, data: &TrainingData, beam: usize) -> Result<f64> {
    let records = gt_caption_records(pipeline, data, beam)?;
    let candidates: Vec<Vec<String>> = records.iter().map(|r| tokenize(&r.caption)).collect();
    let references: Vec<Vec<Vec<String>>> = data
        .records
        .iter()
        .flat_map(|r| r.events.iter().map(|e| vec![e.sentence.clone()]))
        .collect();
    Ok(cider(&candidates, &references)?.score)
}
