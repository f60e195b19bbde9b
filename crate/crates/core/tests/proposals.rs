use densecap::corpus::FeatureSequence;
use densecap::numerics::{ParamStore, SeededRng, Tensor};
use densecap::proposals::{recall_curve, tiou, ProposalConfig, ProposalModel};
use proptest::prelude::*;

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (0.0f64..50.0, 0.01f64..30.0).prop_map(|(s, l)| (s, s + l))
}

fn sequence(rows: usize, dim: usize, seed: u64) -> FeatureSequence {
    let mut rng = SeededRng::new(seed);
    let values = (0..rows * dim).map(|_| rng.gaussian()).collect();
    FeatureSequence::new("v", 16, 16.0, Tensor::matrix(rows, dim, values).unwrap()).unwrap()
}

fn key(p: &densecap::proposals::EventProposal) -> (usize, usize, usize, u64, u64, u64) {
    (p.stride, p.step, p.anchor, p.t_start.to_bits(), p.t_end.to_bits(), p.score.to_bits())
}

proptest! {
    #[test]
    fn tiou_is_symmetric_and_bounded(a in interval(), b in interval()) {
        let x = tiou(a, b).unwrap();
        prop_assert_eq!(x, tiou(b, a).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(tiou(a, a).unwrap(), 1.0);
        if a != b {
            prop_assert!(x < 1.0);
        }
    }

    #[test]
    fn retain_all_emits_every_anchor_regardless_of_stride_order(
        rows in 1usize..20,
        mask in 1u8..16,
        k in 1usize..5,
        seed in 0u64..1000,
    ) {
        let strides: Vec<usize> = [1, 2, 4, 8].into_iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, s)| s).collect();
        let config = ProposalConfig { strides: strides.clone(), k, hidden_size: 3, ..ProposalConfig::default() };
        let mut store = ParamStore::new(seed);
        let model = ProposalModel::register(&mut store, &config, 2, 0.5).unwrap();
        let seq = sequence(rows, 2, seed);
        let all = model.propose_stream(store.params(), &seq, true).unwrap();
        let expected: usize = strides.iter().map(|s| k * rows.div_ceil(*s)).sum();
        prop_assert_eq!(all.len(), expected);

        // Each stride on its own, in reverse order, yields the same set.
        let mut merged = Vec::new();
        for &s in strides.iter().rev() {
            let single = ProposalConfig { strides: vec![s], ..config.clone() };
            let m = ProposalModel::attach(&store, &single, 2).unwrap();
            merged.extend(m.propose_stream(store.params(), &seq, true).unwrap());
        }
        let mut a: Vec<_> = all.iter().map(key).collect();
        let mut b: Vec<_> = merged.iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);

        let thresholded = model.propose_stream(store.params(), &seq, false).unwrap();
        prop_assert!(thresholded.iter().all(|p| p.score >= config.score_threshold));
        prop_assert!(thresholded.len() <= all.len());
    }

    #[test]
    fn recall_is_monotone(
        videos in prop::collection::vec(
            (prop::collection::vec(interval(), 0..30), prop::collection::vec(interval(), 1..4)),
            1..4,
        ),
    ) {
        let (ranked, gt): (Vec<_>, Vec<_>) = videos.into_iter().unzip();
        let thresholds = [0.1, 0.3, 0.5, 0.7, 0.9];
        let table = recall_curve(&ranked, &gt, 40, &thresholds).unwrap();
        prop_assert_eq!(table.recall.len(), 40);
        for n in 0..40 {
            for j in 0..thresholds.len() {
                let r = table.recall[n][j];
                prop_assert!((0.0..=1.0).contains(&r));
                if n > 0 {
                    prop_assert!(r >= table.recall[n - 1][j]);
                }
                if j > 0 {
                    prop_assert!(r <= table.recall[n][j - 1]);
                }
            }
        }
    }
}

#[test]
fn ground_truth_proposals_have_full_recall() {
    let gt = vec![vec![(0.0, 4.0), (2.0, 9.0)], vec![(1.0, 3.0)]];
    let table = recall_curve(&gt, &gt, 5, &[0.5, 0.9]).unwrap();
    assert_eq!(table.recall[0], vec![2.0 / 3.0, 2.0 / 3.0]);
    assert_eq!(table.recall[1], vec![1.0, 1.0]);
}
