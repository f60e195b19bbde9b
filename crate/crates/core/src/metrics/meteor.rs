use crate::error::{Error, Result};

const STEM_LEN: usize = 4;

fn shares_stem(a: &str, b: &str) -> bool {
    let pa: Vec<char> = a.chars().take(STEM_LEN).collect();
    let pb: Vec<char> = b.chars().take(STEM_LEN).collect();
    pa.len() == STEM_LEN && pa == pb
}

/// Reference position aligned to each candidate token: exact matches
/// first, then 4-character prefix stems, each leftmost-first.
fn align(candidate: &[String], reference: &[String]) -> Vec<Option<usize>> {
    let mut used = vec![false; reference.len()];
    let mut out = vec![None; candidate.len()];
    let stages: [fn(&str, &str) -> bool; 2] = [|a, b| a == b, shares_stem];
    for stage in stages {
        for (i, c) in candidate.iter().enumerate() {
            if out[i].is_some() {
                continue;
            }
            if let Some(j) = (0..reference.len()).find(|&j| !used[j] && stage(c, &reference[j])) {
                used[j] = true;
                out[i] = Some(j);
            }
        }
    }
    out
}

fn score_one(candidate: &[String], reference: &[String]) -> f64 {
    let alignment = align(candidate, reference);
    let pairs: Vec<(usize, usize)> = alignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = p * r / (0.9 * p + 0.1 * r);
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f * (1.0 - penalty)
}

/// METEOR without synonym matching; the best score over `references`.
pub fn meteor_lite(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() || references.iter().any(Vec::is_empty) {
        return Err(Error::Input("METEOR needs nonempty references".into()));
    }
    Ok(references
        .iter()
        .map(|r| score_one(candidate, r))
        .fold(0.0, f64::max))
}
