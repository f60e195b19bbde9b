use super::ngram::NgramProfile;
use crate::error::{Error, Result};

fn check_order(n: usize) -> Result<()> {
    if (1..=4).contains(&n) {
        Ok(())
    } else {
        Err(Error::Config(format!("BLEU order {n} outside 1..=4")))
    }
}

/// Clipped matches and candidate n-gram total at order `k`.
fn clipped(cand: &NgramProfile, refs: &[NgramProfile], k: usize) -> (usize, usize) {
    let matched = cand
        .order(k)
        .iter()
        .map(|(g, &c)| {
            let max_ref = refs.iter().map(|r| r.order(k).get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            c.min(max_ref)
        })
        .sum();
    (matched, cand.total(k))
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, refs: &[NgramProfile]) -> usize {
    refs.iter()
        .map(NgramProfile::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

fn combine(matched: &[usize], totals: &[usize], c: usize, r: usize) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (&m, &t) in matched.iter().zip(totals) {
        if m == 0 || t == 0 {
            return 0.0;
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / matched.len() as f64).exp()
}

/// Sentence-level BLEU-n without smoothing.
pub fn bleu_n(candidate: &[String], references: &[Vec<String>], n: usize) -> Result<f64> {
    check_order(n)?;
    if references.is_empty() {
        return Err(Error::Input("BLEU needs at least one reference".into()));
    }
    let cand = NgramProfile::new(candidate);
    let refs: Vec<NgramProfile> = references.iter().map(|r| NgramProfile::new(r)).collect();
    let (matched, totals): (Vec<usize>, Vec<usize>) = (1..=n).map(|k| clipped(&cand, &refs, k)).unzip();
    Ok(combine(&matched, &totals, cand.len(), closest_ref_len(cand.len(), &refs)))
}

/// Corpus-level BLEU-n: clipped counts and lengths summed over all pairs
/// before the geometric mean and brevity penalty.
pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], n: usize) -> Result<f64> {
    check_order(n)?;
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = vec![0usize; n];
    let mut totals = vec![0usize; n];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Input("BLEU needs at least one reference per candidate".into()));
        }
        let cp = NgramProfile::new(cand);
        let rp: Vec<NgramProfile> = refs.iter().map(|x| NgramProfile::new(x)).collect();
        for k in 1..=n {
            let (m, t) = clipped(&cp, &rp, k);
            matched[k - 1] += m;
            totals[k - 1] += t;
        }
        c += cp.len();
        r += closest_ref_len(cp.len(), &rp);
    }
    Ok(combine(&matched, &totals, c, r))
}
