use std::collections::BTreeMap;

pub const MAX_ORDER: usize = 4;

/// n-gram counts of one sentence for orders 1..=4.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NgramProfile {
    counts: [BTreeMap<Vec<String>, usize>; MAX_ORDER],
    len: usize,
}

impl NgramProfile {
    pub fn new(tokens: &[String]) -> Self {
        let mut counts: [BTreeMap<Vec<String>, usize>; MAX_ORDER] = Default::default();
        for (k, map) in counts.iter_mut().enumerate() {
            for w in tokens.windows(k + 1) {
                *map.entry(w.to_vec()).or_default() += 1;
            }
        }
        NgramProfile {
            counts,
            len: tokens.len(),
        }
    }

    /// Token count of the sentence.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Counts of order `n` (1-based).
    pub fn order(&self, n: usize) -> &BTreeMap<Vec<String>, usize> {
        &self.counts[n - 1]
    }

    /// Number of n-grams of order `n`.
    pub fn total(&self, n: usize) -> usize {
        self.len.saturating_sub(n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn counts() {
        let p = NgramProfile::new(&toks("a b a b"));
        assert_eq!(p.order(1)[&toks("a")], 2);
        assert_eq!(p.order(2)[&toks("a b")], 2);
        assert_eq!(p.order(2)[&toks("b a")], 1);
        assert_eq!(p.total(4), 1);
        assert_eq!(p.order(4).len(), 1);
        assert_eq!(NgramProfile::new(&toks("a")).total(3), 0);
    }
}
