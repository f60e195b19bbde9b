use crate::error::{Error, Result};

/// Temporal intersection-over-union of two `(start, end)` intervals.
pub fn tiou(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for (s, e) in [a, b] {
        if !(s < e) {
            return Err(Error::Range(format!("degenerate interval [{s}, {e}]")));
        }
    }
    Ok(tiou_unchecked(a, b))
}

/// [`tiou`] for intervals already known to be valid.
pub fn tiou_unchecked(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tiou((1.0, 4.0), (1.0, 4.0)).unwrap(), 1.0);
        assert_eq!(tiou((0.0, 1.0), (2.0, 3.0)).unwrap(), 0.0);
        assert!((tiou((0.0, 2.0), (1.0, 3.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(tiou((1.0, 1.0), (0.0, 2.0)).is_err());
    }

    #[test]
    fn disjoint_union_excludes_gap() {
        // union of two disjoint intervals is the sum of their lengths
        assert_eq!(tiou_unchecked((0.0, 1.0), (5.0, 6.0)), 0.0);
        assert_eq!(tiou((0.0, 10.0), (0.0, 6.0)).unwrap(), 0.6);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_one_iff_equal(
            a0 in 0.0f64..50.0, al in 0.01f64..20.0,
            b0 in 0.0f64..50.0, bl in 0.01f64..20.0,
        ) {
            let a = (a0, a0 + al);
            let b = (b0, b0 + bl);
            let x = tiou(a, b).unwrap();
            prop_assert_eq!(x, tiou(b, a).unwrap());
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(tiou(a, a).unwrap(), 1.0);
            if a != b {
                prop_assert!(x < 1.0);
            }
        }
    }
}
