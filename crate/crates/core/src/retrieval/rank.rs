use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::{dot, norm};

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Best cosine between a sentence vector and any of a video's proposal vectors.
pub fn score_pair(sentence: &[f64], proposals: &[Vec<f64>]) -> Result<f64> {
    if proposals.is_empty() {
        return Err(Error::Input("score_pair needs at least one proposal vector".into()));
    }
    Ok(proposals
        .iter()
        .map(|p| cosine(sentence, p))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Mean over sentences of [`score_pair`].
pub fn paragraph_score(sentences: &[Vec<f64>], proposals: &[Vec<f64>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Input("paragraph has no sentences".into()));
    }
    let mut total = 0.0;
    for s in sentences {
        total += score_pair(s, proposals)?;
    }
    Ok(total / sentences.len() as f64)
}

/// One-direction hinge sum `Σ max(0, margin − pos + neg)`.
pub fn margin_loss(pos: f64, negs: &[f64], margin: f64) -> f64 {
    negs.iter().map(|&n| (margin - pos + n).max(0.0)).sum()
}

/// Bidirectional hinge over a square score matrix `s[paragraph][video]`
/// whose diagonal holds the matching pairs, averaged over the `B` rows.
/// Returns the loss and `∂loss/∂s`.
pub fn batch_margin_loss(s: &[Vec<f64>], margin: f64) -> (f64, Vec<Vec<f64>>) {
    let b = s.len();
    let mut ds = vec![vec![0.0; b]; b];
    let mut loss = 0.0;
    if b == 0 {
        return (loss, ds);
    }
    let scale = 1.0 / b as f64;
    for a in 0..b {
        for o in (0..b).filter(|&o| o != a) {
            // paragraph a against video o, then video a against paragraph o
            for (r, c) in [(a, o), (o, a)] {
                let h = margin - s[a][a] + s[r][c];
                if h > 0.0 {
                    loss += h * scale;
                    ds[a][a] -= scale;
                    ds[r][c] += scale;
                }
            }
        }
    }
    (loss, ds)
}

/// Recall at 1, 5 and 50 and the median rank of the correct target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    #[serde(rename = "R@1")]
    pub r1: f64,
    #[serde(rename = "R@5")]
    pub r5: f64,
    #[serde(rename = "R@50")]
    pub r50: f64,
    pub median_rank: usize,
}

/// 1-based rank of `correct` in row `scores`; equal scores rank by ascending index.
pub fn rank_of(scores: &[f64], correct: usize) -> Result<usize> {
    if correct >= scores.len() {
        return Err(Error::Input(format!(
            "correct target {correct} out of range for {} candidates",
            scores.len()
        )));
    }
    let c = scores[correct];
    Ok(1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > c || (x == c && j < correct))
        .count())
}

pub fn rank_eval(sim: &[Vec<f64>], correct: &[usize]) -> Result<RankMetrics> {
    if sim.len() != correct.len() {
        return Err(Error::Input(format!(
            "{} queries but {} correct indices",
            sim.len(),
            correct.len()
        )));
    }
    if sim.is_empty() {
        return Err(Error::Input("rank_eval needs at least one query".into()));
    }
    let mut ranks = sim
        .iter()
        .zip(correct)
        .map(|(row, &c)| rank_of(row, c))
        .collect::<Result<Vec<_>>>()?;
    let n = ranks.len() as f64;
    let recall = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let (r1, r5, r50) = (recall(1), recall(5), recall(50));
    ranks.sort_unstable();
    Ok(RankMetrics {
        r1,
        r5,
        r50,
        median_rank: ranks[(ranks.len() - 1) / 2],
    })
}

/// Metrics for both directions of a paragraph × video score matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub video_retrieval: RankMetrics,
    pub paragraph_retrieval: RankMetrics,
}

/// `sim[p][v]` scores paragraph `p` against video `v`; pairs match on the diagonal.
pub fn retrieval_report(sim: &[Vec<f64>]) -> Result<RetrievalReport> {
    let n = sim.len();
    if sim.iter().any(|r| r.len() != n) {
        return Err(Error::Input("retrieval score matrix must be square".into()));
    }
    let diag: Vec<usize> = (0..n).collect();
    let transposed: Vec<Vec<f64>> = (0..n).map(|v| (0..n).map(|p| sim[p][v]).collect()).collect();
    Ok(RetrievalReport {
        video_retrieval: rank_eval(sim, &diag)?,
        paragraph_retrieval: rank_eval(&transposed, &diag)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_pair_examples() {
        let s = vec![1.0, 0.0];
        assert_eq!(score_pair(&s, &[vec![0.0, 3.0], vec![2.0, 0.0]]).unwrap(), 1.0);
        assert_eq!(score_pair(&s, &[vec![0.0, 1.0], vec![0.0, -2.0]]).unwrap(), 0.0);
        let at = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        assert!((score_pair(&s, &[at(0.2), at(0.9)]).unwrap() - 0.9).abs() < 1e-15);
        assert!(score_pair(&s, &[]).is_err());
        assert_eq!(cosine(&[0.0, 0.0], &s), 0.0);
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_loss(1.0, &[0.0], 0.2), 0.0);
        assert_eq!(margin_loss(0.0, &[0.0], 0.2), 0.2);
        assert!((margin_loss(0.5, &[0.5, 0.6], 0.2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn batch_loss_counts_both_directions() {
        let s = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let (l, ds) = batch_margin_loss(&s, 0.2);
        assert!((l - 4.0 * 0.2 / 2.0).abs() < 1e-15);
        assert_eq!(ds[0][0], -1.0);
        assert_eq!(ds[0][1], 1.0);
        let good = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(batch_margin_loss(&good, 0.2).0, 0.0);
    }

    #[test]
    fn rank_examples() {
        let id: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect();
        let m = rank_eval(&id, &[0, 1, 2, 3]).unwrap();
        assert_eq!((m.r1, m.median_rank), (1.0, 1));
        assert_eq!(rank_of(&[0.5; 10], 9).unwrap(), 10);
        let sim = vec![vec![0.9, 0.1, 0.0], vec![0.9, 0.5, 0.0], vec![0.9, 0.5, 0.1]];
        let m = rank_eval(&sim, &[0, 1, 2]).unwrap();
        assert_eq!(m.median_rank, 2);
        assert!((m.r1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rank_eval(&[vec![1.0, 2.0], vec![0.0, 3.0]], &[0, 1]).unwrap().median_rank, 1);
        assert!(rank_eval(&sim, &[0, 1, 3]).is_err());
    }

    #[test]
    fn report_directions() {
        let sim = vec![vec![1.0, 0.9], vec![2.0, 0.5]];
        let r = retrieval_report(&sim).unwrap();
        // paragraph 1 prefers video 0; both videos rank their paragraph second
        assert_eq!(r.video_retrieval.r1, 0.5);
        assert_eq!(r.paragraph_retrieval.r1, 0.0);
        assert_eq!(r.paragraph_retrieval.median_rank, 2);
        let json = serde_json::to_value(r).unwrap();
        assert!(json["video_retrieval"]["R@5"].is_number());
        assert!(json["paragraph_retrieval"]["median_rank"].is_number());
    }

    proptest! {
        #[test]
        fn monotone_transform_and_recall_order(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 7), 1..9),
            seed in 0usize..100,
        ) {
            let correct: Vec<usize> = (0..rows.len()).map(|i| (i * 3 + seed) % 7).collect();
            let a = rank_eval(&rows, &correct).unwrap();
            let t: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| (x * 0.5).exp() * 3.0 + 1.0).collect()).collect();
            prop_assert_eq!(a, rank_eval(&t, &correct).unwrap());
            prop_assert!(a.r1 <= a.r5 && a.r5 <= a.r50);
            prop_assert_eq!(a.r50, 1.0);
        }

        #[test]
        fn margin_zero_iff_separated(pos in -1.0f64..1.0, negs in prop::collection::vec(-1.0f64..1.0, 1..6)) {
            let zero = margin_loss(pos, &negs, 0.2) == 0.0;
            prop_assert_eq!(zero, negs.iter().all(|&n| pos - n >= 0.2));
        }
    }
}
