use std::collections::{BTreeMap, BTreeSet};

use super::ngram::{NgramProfile, MAX_ORDER};
use super::stable_sum;
use crate::error::{Error, Result};

/// Document frequencies over a reference corpus of `M` items.
#[derive(Clone, Debug)]
pub struct CiderScorer {
    df: [BTreeMap<Vec<String>, usize>; MAX_ORDER],
    items: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CiderResult {
    pub score: f64,
    pub per_item: Vec<f64>,
}

impl CiderScorer {
    pub fn new(references: &[Vec<Vec<String>>]) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Input("CIDEr needs at least one reference item".into()));
        }
        let mut df: [BTreeMap<Vec<String>, usize>; MAX_ORDER] = Default::default();
        for refs in references {
            let mut seen: [BTreeSet<&[String]>; MAX_ORDER] = Default::default();
            for r in refs {
                for (k, s) in seen.iter_mut().enumerate() {
                    s.extend(r.windows(k + 1));
                }
            }
            for (k, s) in seen.iter().enumerate() {
                for g in s {
                    *df[k].entry(g.to_vec()).or_default() += 1;
                }
            }
        }
        Ok(CiderScorer {
            df,
            items: references.len(),
        })
    }

    pub fn items(&self) -> usize {
        self.items
    }

    fn idf(&self, k: usize, g: &[String]) -> f64 {
        let df = self.df[k].get(g).copied().unwrap_or(0).max(1);
        (self.items as f64 / df as f64).ln()
    }

    fn vector(&self, p: &NgramProfile, k: usize) -> BTreeMap<Vec<String>, f64> {
        p.order(k + 1)
            .iter()
            .map(|(g, &c)| (g.clone(), c as f64 * self.idf(k, g)))
            .collect()
    }

    /// CIDEr of one candidate against its references under this corpus's idf.
    pub fn score(&self, candidate: &[String], references: &[Vec<String>]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let cp = NgramProfile::new(candidate);
        let refs: Vec<NgramProfile> = references.iter().map(|r| NgramProfile::new(r)).collect();
        let per_order: Vec<f64> = (0..MAX_ORDER)
            .map(|k| {
                let cv = self.vector(&cp, k);
                let sims: Vec<f64> = refs.iter().map(|r| cosine(&cv, &self.vector(r, k))).collect();
                stable_sum(&sims) / sims.len() as f64
            })
            .collect();
        10.0 * stable_sum(&per_order) / MAX_ORDER as f64
    }
}

fn cosine(a: &BTreeMap<Vec<String>, f64>, b: &BTreeMap<Vec<String>, f64>) -> f64 {
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}

/// Corpus CIDEr with idf over the `M` reference items; the corpus score is
/// the mean of the per-item scores.
pub fn cider(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<CiderResult> {
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let scorer = CiderScorer::new(references)?;
    let per_item: Vec<f64> = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| scorer.score(c, r))
        .collect();
    Ok(CiderResult {
        score: stable_sum(&per_item) / per_item.len() as f64,
        per_item,
    })
}
