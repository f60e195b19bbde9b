use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{bleu_n, meteor_lite, stable_sum, CiderScorer};
use crate::captioning::CaptionRecord;
use crate::corpus::{tokenize, VideoRecord};
use crate::error::{Error, Result};
use crate::proposals::tiou_unchecked;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionMetric {
    Bleu1,
    Bleu2,
    Bleu3,
    Bleu4,
    Meteor,
    Cider,
}

impl CaptionMetric {
    pub const ALL: [CaptionMetric; 6] = [
        CaptionMetric::Bleu1,
        CaptionMetric::Bleu2,
        CaptionMetric::Bleu3,
        CaptionMetric::Bleu4,
        CaptionMetric::Meteor,
        CaptionMetric::Cider,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown metric {name:?}; expected bleu1..bleu4, meteor or cider")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            CaptionMetric::Bleu1 => "bleu1",
            CaptionMetric::Bleu2 => "bleu2",
            CaptionMetric::Bleu3 => "bleu3",
            CaptionMetric::Bleu4 => "bleu4",
            CaptionMetric::Meteor => "meteor",
            CaptionMetric::Cider => "cider",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenseCaptionConfig {
    pub tiou_thresholds: Vec<f64>,
    pub top_n: usize,
    pub metric: CaptionMetric,
}

impl Default for DenseCaptionConfig {
    fn default() -> Self {
        DenseCaptionConfig {
            tiou_thresholds: vec![0.3, 0.5, 0.7],
            top_n: 1000,
            metric: CaptionMetric::Cider,
        }
    }
}

impl DenseCaptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tiou_thresholds.is_empty() || self.tiou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config(format!(
                "tIoU thresholds {:?} must be nonempty and lie in (0,1]",
                self.tiou_thresholds
            )));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be at least 1".into()));
        }
        Ok(())
    }
}

/// A scored, captioned interval.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePrediction {
    pub video_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub score: f64,
    pub caption: Vec<String>,
}

impl From<&CaptionRecord> for DensePrediction {
    fn from(r: &CaptionRecord) -> Self {
        DensePrediction {
            video_id: r.video_id.clone(),
            t_start: r.t_start,
            t_end: r.t_end,
            score: r.proposal_score,
            caption: tokenize(&r.caption),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseScore {
    pub per_threshold: BTreeMap<String, f64>,
    pub average: f64,
}

fn by_rank(a: &&DensePrediction, b: &&DensePrediction) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.t_start.total_cmp(&b.t_start))
        .then((a.t_end - a.t_start).total_cmp(&(b.t_end - b.t_start)))
        .then_with(|| a.caption.cmp(&b.caption))
}

/// Greedy one-to-one matching at threshold `tau`: GT events in order of
/// decreasing duration each take the unmatched prediction of highest tIoU
/// (ties to the better-ranked one) among those reaching `tau`.
pub fn match_events(gt: &[(f64, f64)], ranked: &[(f64, f64)], tau: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..gt.len()).collect();
    order.sort_by(|&a, &b| {
        let la = gt[a].1 - gt[a].0;
        let lb = gt[b].1 - gt[b].0;
        lb.total_cmp(&la).then(a.cmp(&b))
    });
    let mut used = vec![false; ranked.len()];
    let mut out = vec![None; gt.len()];
    for g in order {
        let mut best: Option<(usize, f64)> = None;
        for (p, &iv) in ranked.iter().enumerate() {
            if used[p] {
                continue;
            }
            let x = tiou_unchecked(iv, gt[g]);
            if x >= tau && best.is_none_or(|(_, b)| x > b) {
                best = Some((p, x));
            }
        }
        if let Some((p, _)) = best {
            used[p] = true;
            out[g] = Some(p);
        }
    }
    out
}

/// Dense-captioning score of `predictions` against `gt` under one metric.
pub fn dense_caption_score(
    predictions: &[DensePrediction],
    gt: &[VideoRecord],
    config: &DenseCaptionConfig,
) -> Result<DenseScore> {
    config.validate()?;
    let total_gt: usize = gt.iter().map(|v| v.events.len()).sum();
    if total_gt == 0 {
        return Err(Error::Input("dense evaluation needs at least one ground-truth event".into()));
    }
    let index: HashMap<&str, usize> = gt.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    let mut per_video: Vec<Vec<&DensePrediction>> = vec![Vec::new(); gt.len()];
    for p in predictions {
        if !(p.t_start < p.t_end) {
            return Err(Error::Validation {
                video_id: p.video_id.clone(),
                detail: format!("prediction [{}, {}] is degenerate", p.t_start, p.t_end),
            });
        }
        let v = *index
            .get(p.video_id.as_str())
            .ok_or_else(|| Error::Input(format!("prediction for unknown video {}", p.video_id)))?;
        per_video[v].push(p);
    }
    for preds in &mut per_video {
        preds.sort_by(by_rank);
        preds.truncate(config.top_n);
    }
    let cider = match config.metric {
        CaptionMetric::Cider => Some(CiderScorer::new(
            &gt.iter()
                .flat_map(|v| v.events.iter().map(|e| vec![e.sentence.clone()]))
                .collect::<Vec<_>>(),
        )?),
        _ => None,
    };
    let pair_score = |cand: &[String], reference: &[String]| -> Result<f64> {
        let refs = [reference.to_vec()];
        Ok(match config.metric {
            CaptionMetric::Bleu1 => bleu_n(cand, &refs, 1)?,
            CaptionMetric::Bleu2 => bleu_n(cand, &refs, 2)?,
            CaptionMetric::Bleu3 => bleu_n(cand, &refs, 3)?,
            CaptionMetric::Bleu4 => bleu_n(cand, &refs, 4)?,
            CaptionMetric::Meteor => meteor_lite(cand, &refs)?,
            CaptionMetric::Cider => cider.as_ref().expect("scorer built for cider").score(cand, &refs),
        })
    };

    let mut per_threshold = BTreeMap::new();
    let mut values = Vec::with_capacity(config.tiou_thresholds.len());
    for &tau in &config.tiou_thresholds {
        let mut scores = Vec::new();
        for (video, preds) in gt.iter().zip(&per_video) {
            let gi: Vec<(f64, f64)> = video.events.iter().map(|e| e.interval()).collect();
            let pi: Vec<(f64, f64)> = preds.iter().map(|p| (p.t_start, p.t_end)).collect();
            for (g, m) in match_events(&gi, &pi, tau).into_iter().enumerate() {
                if let Some(p) = m {
                    scores.push(pair_score(&preds[p].caption, &video.events[g].sentence)?);
                }
            }
        }
        let value = stable_sum(&scores) / total_gt as f64;
        per_threshold.insert(format!("{tau}"), value);
        values.push(value);
    }
    Ok(DenseScore {
        per_threshold,
        average: values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Scores for several metrics keyed by metric name.
pub fn dense_report(
    predictions: &[DensePrediction],
    gt: &[VideoRecord],
    config: &DenseCaptionConfig,
    metrics: &[CaptionMetric],
) -> Result<BTreeMap<String, DenseScore>> {
    metrics
        .iter()
        .map(|&metric| {
            let cfg = DenseCaptionConfig {
                metric,
                ..config.clone()
            };
            Ok((metric.name().to_string(), dense_caption_score(predictions, gt, &cfg)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Event;
    use proptest::prelude::*;

    fn video(id: &str, events: &[(f64, f64, &str)]) -> VideoRecord {
        VideoRecord {
            id: id.into(),
            duration_s: 100.0,
            events: events.iter().map(|&(s, e, t)| Event::new(s, e, t)).collect(),
        }
    }

    fn pred(id: &str, s: f64, e: f64, score: f64, cap: &str) -> DensePrediction {
        DensePrediction {
            video_id: id.into(),
            t_start: s,
            t_end: e,
            score,
            caption: tokenize(cap),
        }
    }

    fn cfg(metric: CaptionMetric) -> DenseCaptionConfig {
        DenseCaptionConfig {
            metric,
            ..DenseCaptionConfig::default()
        }
    }

    #[test]
    fn perfect_predictions() {
        let gt = vec![video("a", &[(0.0, 5.0, "a man runs"), (3.0, 9.0, "a dog barks")])];
        let preds = vec![pred("a", 0.0, 5.0, 0.9, "a man runs"), pred("a", 3.0, 9.0, 0.8, "a dog barks")];
        assert_eq!(dense_caption_score(&preds, &gt, &cfg(CaptionMetric::Bleu1)).unwrap().average, 1.0);
    }

    #[test]
    fn nothing_reaches_lowest_threshold() {
        let gt = vec![video("a", &[(0.0, 10.0, "a man runs")])];
        let preds = vec![pred("a", 9.0, 20.0, 0.9, "a man runs")];
        assert_eq!(dense_caption_score(&preds, &gt, &cfg(CaptionMetric::Bleu1)).unwrap().average, 0.0);
    }

    #[test]
    fn worked_partial_overlap() {
        let gt = vec![video("a", &[(0.0, 10.0, "a man runs")])];
        let preds = vec![pred("a", 0.0, 6.0, 0.9, "a man runs")];
        let s = dense_caption_score(&preds, &gt, &cfg(CaptionMetric::Bleu1)).unwrap();
        assert!((s.average - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.per_threshold["0.7"], 0.0);
    }

    #[test]
    fn matching_is_one_to_one() {
        let m = match_events(&[(0.0, 4.0), (0.0, 5.0)], &[(0.0, 5.0)], 0.3);
        assert_eq!(m, vec![None, Some(0)]);
    }

    #[test]
    fn unknown_video_and_metric() {
        let gt = vec![video("a", &[(0.0, 10.0, "x")])];
        assert!(dense_caption_score(&[pred("b", 0.0, 1.0, 1.0, "x")], &gt, &cfg(CaptionMetric::Bleu1)).is_err());
        assert!(CaptionMetric::parse("rouge").is_err());
        assert_eq!(CaptionMetric::parse("bleu3").unwrap(), CaptionMetric::Bleu3);
    }

    #[test]
    fn top_n_truncates() {
        let gt = vec![video("a", &[(0.0, 10.0, "a b")])];
        let preds = vec![pred("a", 50.0, 60.0, 0.9, "a b"), pred("a", 0.0, 10.0, 0.1, "a b")];
        let mut c = cfg(CaptionMetric::Bleu1);
        assert_eq!(dense_caption_score(&preds, &gt, &c).unwrap().average, 1.0);
        c.top_n = 1;
        assert_eq!(dense_caption_score(&preds, &gt, &c).unwrap().average, 0.0);
    }

    proptest! {
        #[test]
        fn order_invariant_and_monotone_for_separated_events(
            slots in prop::collection::vec((1.0f64..8.0, prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.0f64..1.0, 0usize..3), 0..4)), 1..5),
            bump in 0.0f64..0.2,
        ) {
            // GT k lives in [20k, 20k+10]; predictions stay inside their slot
            let words = ["a man runs", "a dog barks fast", "the man"];
            let mut events = Vec::new();
            let mut preds = Vec::new();
            for (k, (len, ps)) in slots.iter().enumerate() {
                let base = 20.0 * k as f64 + 5.0;
                events.push((base, base + len, words[k % 3]));
                for &(ds, de, sc, w) in ps {
                    let s = (base + ds).max(20.0 * k as f64);
                    let e = (base + len + de).min(20.0 * k as f64 + 19.0);
                    if s < e {
                        preds.push(pred("v", s, e, sc, words[w]));
                    }
                }
            }
            let gt = vec![video("v", &events)];
            for metric in CaptionMetric::ALL {
                let low = DenseCaptionConfig { metric, ..DenseCaptionConfig::default() };
                let high = DenseCaptionConfig {
                    tiou_thresholds: low.tiou_thresholds.iter().map(|t| (t + bump).min(1.0)).collect(),
                    ..low.clone()
                };
                let a = dense_caption_score(&preds, &gt, &low).unwrap();
                let b = dense_caption_score(&preds, &gt, &high).unwrap();
                prop_assert!(b.average <= a.average + 1e-12);
                let rev: Vec<_> = preds.iter().rev().cloned().collect();
                prop_assert_eq!(dense_caption_score(&rev, &gt, &low).unwrap().average, a.average);
            }
        }
    }
}
