use super::model::anchor_interval;
use super::tiou::tiou_unchecked;
use super::ProposalConfig;
use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::weighted_bce_logit;

/// Binary targets of one stride, `steps × K`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrideTargets {
    pub stride: usize,
    pub targets: Vec<Vec<f64>>,
}

/// Label anchor `(m, k)` positive iff its interval reaches `tiou_positive`
/// against some ground-truth event.
pub fn make_targets(gt: &[(f64, f64)], seq: &FeatureSequence, config: &ProposalConfig) -> Result<Vec<StrideTargets>> {
    for &(s, e) in gt {
        if !(s < e) {
            return Err(Error::Range(format!("degenerate ground-truth interval [{s}, {e}]")));
        }
    }
    let n = seq.rows();
    let window = seq.window_seconds();
    let duration = seq.duration();
    Ok(config
        .strides
        .iter()
        .map(|&s| {
            let steps = n.div_ceil(s).max(1);
            let targets = (0..steps)
                .map(|m| {
                    (1..=config.k)
                        .map(|k| {
                            let a = anchor_interval(m, k, s, window, duration);
                            let hit = gt.iter().any(|&g| tiou_unchecked(a, g) >= config.tiou_positive);
                            if hit {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            StrideTargets { stride: s, targets }
        })
        .collect())
}

/// `#neg / #pos` over all of a video's targets; 1 when either class is absent.
pub fn positive_weight<'a>(targets: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut pos, mut neg) = (0usize, 0usize);
    for &t in targets {
        if t > 0.5 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// Weighted binary cross-entropy of probabilities `scores` against `targets`,
/// averaged over all entries.
pub fn proposal_loss(scores: &[f64], targets: &[f64]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::shape(
            "proposal_loss",
            format!("{} scores vs {} targets", scores.len(), targets.len()),
        ));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let w = positive_weight(targets);
    let total: f64 = scores
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(1e-15, 1.0 - 1e-15);
            -(w * t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// [`proposal_loss`] on logits for every stride of one video, with the
/// gradient per logit.
pub fn proposal_loss_logits(logits: &[&[Vec<f64>]], targets: &[StrideTargets]) -> Result<(f64, Vec<Vec<Vec<f64>>>)> {
    if logits.len() != targets.len() {
        return Err(Error::shape(
            "proposal_loss",
            format!("{} strides of logits vs {} of targets", logits.len(), targets.len()),
        ));
    }
    let mut count = 0usize;
    for (z, t) in logits.iter().zip(targets) {
        if z.len() != t.targets.len() || z.iter().zip(&t.targets).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::shape("proposal_loss", format!("stride {} logits and targets differ", t.stride)));
        }
        count += z.iter().map(Vec::len).sum::<usize>();
    }
    let w = positive_weight(targets.iter().flat_map(|t| t.targets.iter().flatten()));
    let scale = 1.0 / count.max(1) as f64;
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(targets)
        .map(|(z, t)| {
            z.iter()
                .zip(&t.targets)
                .map(|(zr, tr)| {
                    zr.iter()
                        .zip(tr)
                        .map(|(&zi, &ti)| {
                            let (l, g) = weighted_bce_logit(zi, ti, w);
                            loss += l;
                            g * scale
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok((loss * scale, grads))
}
