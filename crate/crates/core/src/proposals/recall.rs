use std::fmt::Write;

use super::tiou::tiou;
use crate::error::{Error, Result};

/// `recall[n-1][j]` is the recall of the top-`n` proposals at `thresholds[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecallTable {
    pub thresholds: Vec<f64>,
    pub recall: Vec<Vec<f64>>,
}

impl RecallTable {
    pub fn max_n(&self) -> usize {
        self.recall.len()
    }

    /// Recall at `n` proposals (clamped to the table size) for threshold index `j`.
    pub fn at(&self, n: usize, j: usize) -> f64 {
        self.recall[n.clamp(1, self.max_n()) - 1][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,tau,recall\n");
        for (i, row) in self.recall.iter().enumerate() {
            for (tau, r) in self.thresholds.iter().zip(row) {
                writeln!(out, "{},{},{}", i + 1, tau, r).expect("write to string");
            }
        }
        out
    }
}

/// Localization recall over a dataset. `ranked[v]` holds video `v`'s
/// proposal intervals best first and `gt[v]` its ground-truth intervals;
/// recall is total matched GT over total GT.
pub fn recall_curve(
    ranked: &[Vec<(f64, f64)>],
    gt: &[Vec<(f64, f64)>],
    max_n: usize,
    thresholds: &[f64],
) -> Result<RecallTable> {
    if ranked.len() != gt.len() {
        return Err(Error::Input(format!("{} proposal lists for {} videos", ranked.len(), gt.len())));
    }
    if max_n == 0 {
        return Err(Error::Config("max_n must be at least 1".into()));
    }
    if thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::Config(format!("tIoU thresholds {thresholds:?} must lie in (0,1]")));
    }
    // hits[j][r]: GT events first covered at threshold j by the proposal of rank r
    let mut hits = vec![vec![0usize; max_n]; thresholds.len()];
    let mut total = 0usize;
    for (props, events) in ranked.iter().zip(gt) {
        let top = &props[..props.len().min(max_n)];
        for &g in events {
            total += 1;
            let ious = top.iter().map(|&p| tiou(p, g)).collect::<Result<Vec<_>>>()?;
            for (j, &tau) in thresholds.iter().enumerate() {
                if let Some(r) = ious.iter().position(|&x| x >= tau) {
                    hits[j][r] += 1;
                }
            }
        }
    }
    let mut recall = vec![vec![0.0; thresholds.len()]; max_n];
    for (j, h) in hits.iter().enumerate() {
        let mut cum = 0usize;
        for n in 0..max_n {
            cum += h[n];
            recall[n][j] = if total == 0 { 0.0 } else { cum as f64 / total as f64 };
        }
    }
    Ok(RecallTable {
        thresholds: thresholds.to_vec(),
        recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_cases() {
        let t = recall_curve(&[vec![(1.0, 3.0)]], &[vec![(1.0, 3.0)]], 3, &[0.3, 0.5, 0.9]).unwrap();
        assert!(t.recall.iter().flatten().all(|&r| r == 1.0));
        let t = recall_curve(&[vec![]], &[vec![(1.0, 3.0)]], 5, &[0.5]).unwrap();
        assert!(t.recall.iter().flatten().all(|&r| r == 0.0));
        let t = recall_curve(&[vec![(0.0, 6.0), (0.0, 10.0)]], &[vec![(0.0, 10.0)]], 2, &[0.7]).unwrap();
        assert_eq!(t.at(1, 0), 0.0);
        assert_eq!(t.at(2, 0), 1.0);
    }

    #[test]
    fn csv_layout() {
        let t = recall_curve(&[vec![(0.0, 1.0)]], &[vec![(0.0, 1.0), (5.0, 6.0)]], 2, &[0.5]).unwrap();
        assert_eq!(t.to_csv(), "n,tau,recall\n1,0.5,0.5\n2,0.5,0.5\n");
    }

    fn interval() -> impl Strategy<Value = (f64, f64)> {
        (0.0f64..50.0, 0.1f64..20.0).prop_map(|(s, l)| (s, s + l))
    }

    proptest! {
        #[test]
        fn monotone_in_n_and_tau(
            videos in prop::collection::vec(
                (prop::collection::vec(interval(), 0..15), prop::collection::vec(interval(), 1..4)),
                1..4,
            ),
        ) {
            let (ranked, gt): (Vec<_>, Vec<_>) = videos.into_iter().unzip();
            let taus = [0.1, 0.3, 0.5, 0.7, 0.9];
            let t = recall_curve(&ranked, &gt, 12, &taus).unwrap();
            for n in 0..t.max_n() {
                for j in 0..taus.len() {
                    if n > 0 {
                        prop_assert!(t.recall[n][j] >= t.recall[n - 1][j]);
                    }
                    if j > 0 {
                        prop_assert!(t.recall[n][j] <= t.recall[n][j - 1]);
                    }
                }
            }
        }
    }
}
