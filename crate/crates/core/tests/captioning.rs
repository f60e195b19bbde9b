use densecap::captioning::{
    bucket_events, context_vectors, AttentionParams, CaptionConfig, CaptionModel, ContextMode, ContextScope, Weighting,
};
use densecap::numerics::{ParamStore, SeededRng};
use proptest::prelude::*;

fn events(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = SeededRng::new(seed);
    let hs = (0..n).map(|_| (0..d).map(|_| rng.gaussian()).collect()).collect();
    let ends = (0..n).map(|_| rng.int_inclusive(1, 5) as f64).collect();
    (hs, ends)
}

fn weighting() -> impl Strategy<Value = Weighting> {
    prop_oneof![Just(Weighting::Uniform), Just(Weighting::DotAttention)]
}

proptest! {
    #[test]
    fn buckets_partition_the_other_events(ends in prop::collection::vec(0u8..6, 1..10), pick in 0usize..10) {
        let ends: Vec<f64> = ends.into_iter().map(f64::from).collect();
        let i = pick % ends.len();
        let (past, future) = bucket_events(i, &ends);
        let mut all: Vec<usize> = past.iter().chain(&future).copied().collect();
        all.push(i);
        all.sort_unstable();
        prop_assert_eq!(all, (0..ends.len()).collect::<Vec<_>>());
        prop_assert!(past.iter().all(|&j| ends[j] < ends[i]));
        prop_assert!(future.iter().all(|&j| ends[j] >= ends[i]));
    }

    #[test]
    fn context_ignores_event_order(n in 1usize..8, d in 1usize..4, seed in 0u64..1000, w in weighting(), rot in 0usize..8) {
        let (hs, ends) = events(n, d, seed);
        let mut store = ParamStore::new(seed);
        let attn = AttentionParams::register(&mut store, "attn", d, 0.7).unwrap();
        let mode = ContextMode::new(ContextScope::PastAndFuture, w);
        let order: Vec<usize> = (0..n).map(|j| (j + rot) % n).rev().collect();
        let hs2: Vec<Vec<f64>> = order.iter().map(|&j| hs[j].clone()).collect();
        let ends2: Vec<f64> = order.iter().map(|&j| ends[j]).collect();
        for (pos, &orig) in order.iter().enumerate() {
            let a = context_vectors(orig, &hs, &ends, store.params(), &attn, mode).unwrap();
            let b = context_vectors(pos, &hs2, &ends2, store.params(), &attn, mode).unwrap();
            for (x, y) in a.h_past.iter().chain(&a.h_future).zip(b.h_past.iter().chain(&b.h_future)) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{} vs {}", x, y);
            }
            prop_assert_eq!(&a.h_self, &b.h_self);
        }
    }

    #[test]
    fn no_context_captions_ignore_other_events(n in 2usize..6, seed in 0u64..1000, w in weighting()) {
        let d = 3;
        let (hs, ends) = events(n, d, seed);
        let (mut others, _) = events(n, d, seed + 1);
        others[0] = hs[0].clone();
        let mut store = ParamStore::new(seed);
        let config = CaptionConfig { embed_dim: 3, hidden_size: 4, num_layers: 2, inject_every_step: true };
        let model = CaptionModel::register(&mut store, &config, 8, d, 0.8).unwrap();
        let attn = AttentionParams::register(&mut store, "attn", d, 0.8).unwrap();
        let mode = ContextMode::new(ContextScope::None, w);
        let a = context_vectors(0, &hs, &ends, store.params(), &attn, mode).unwrap();
        let b = context_vectors(0, &others, &ends, store.params(), &attn, mode).unwrap();
        prop_assert_eq!(&a, &b);
        let la = model.logits_sequence(store.params(), &a, &[1, 4, 5]).unwrap();
        let lb = model.logits_sequence(store.params(), &b, &[1, 4, 5]).unwrap();
        prop_assert_eq!(la, lb);
    }

    #[test]
    fn wider_beams_never_score_below_greedy(seed in 0u64..10_000, beam in 1usize..6) {
        let mut store = ParamStore::new(seed);
        let config = CaptionConfig { embed_dim: 2, hidden_size: 3, num_layers: 1, inject_every_step: false };
        let model = CaptionModel::register(&mut store, &config, 7, 2, 1.5).unwrap();
        let (hs, _) = events(3, 2, seed);
        let bundle = densecap::captioning::ContextBundle { h_past: hs[0].clone(), h_self: hs[1].clone(), h_future: hs[2].clone() };
        let greedy = model.greedy(store.params(), &bundle, 30).unwrap();
        let wide = model.beam_decode(store.params(), &bundle, beam, 30).unwrap();
        prop_assert!(wide.logprob >= greedy.logprob);
        prop_assert!(wide.tokens.len() <= 30);
        prop_assert!(wide.logprob <= 0.0);
    }
}
