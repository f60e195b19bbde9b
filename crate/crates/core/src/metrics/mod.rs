//! Caption metrics and the dense-captioning score.

pub mod bleu;
pub mod cider;
pub mod dense;
pub mod meteor;
pub mod ngram;

pub use bleu::{bleu_n, corpus_bleu};
pub use cider::{cider, CiderResult, CiderScorer};
pub use dense::{
    dense_caption_score, dense_report, match_events, CaptionMetric, DenseCaptionConfig, DensePrediction, DenseScore,
};
pub use meteor::meteor_lite;
pub use ngram::{NgramProfile, MAX_ORDER};

/// Sum that does not depend on the order of `values`.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}
