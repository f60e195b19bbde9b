//! Past/future bucketing and (attended or mean-pooled) context sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::{dot, matvec, outer_acc};
use crate::numerics::{Grads, ParamId, ParamStore, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextScope {
    None,
    PastOnly,
    PastAndFuture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    DotAttention,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextMode {
    pub scope: ContextScope,
    pub weighting: Weighting,
}

impl ContextMode {
    pub const VARIANTS: [&'static str; 5] = ["none", "online-attn", "online", "full-attn", "full"];

    pub fn new(scope: ContextScope, weighting: Weighting) -> Self {
        ContextMode { scope, weighting }
    }

    /// Map a variant name to its mode; the `-attn` variants mean-pool.
    pub fn from_variant(name: &str) -> Result<Self> {
        use ContextScope::*;
        use Weighting::*;
        Ok(match name {
            "none" | "no-context" => ContextMode::new(None, DotAttention),
            "online-attn" => ContextMode::new(PastOnly, Uniform),
            "online" => ContextMode::new(PastOnly, DotAttention),
            "full-attn" => ContextMode::new(PastAndFuture, Uniform),
            "full" => ContextMode::new(PastAndFuture, DotAttention),
            other => {
                return Err(Error::Config(format!(
                    "unknown mode {other:?}; expected one of {:?}",
                    Self::VARIANTS
                )))
            }
        })
    }

    pub fn variant(&self) -> &'static str {
        use ContextScope::*;
        use Weighting::*;
        match (self.scope, self.weighting) {
            (None, _) => "none",
            (PastOnly, Uniform) => "online-attn",
            (PastOnly, DotAttention) => "online",
            (PastAndFuture, Uniform) => "full-attn",
            (PastAndFuture, DotAttention) => "full",
        }
    }

    pub fn masked(&self) -> Self {
        ContextMode::new(ContextScope::None, self.weighting)
    }
}

/// `(h_past, h_self, h_future)`, each of the proposal hidden size.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBundle {
    pub h_past: Vec<f64>,
    pub h_self: Vec<f64>,
    pub h_future: Vec<f64>,
}

impl ContextBundle {
    /// Bundle with empty past and future.
    pub fn isolated(h_self: Vec<f64>) -> Self {
        let n = h_self.len();
        ContextBundle {
            h_past: vec![0.0; n],
            h_self,
            h_future: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.h_self.len()
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.dim());
        v.extend_from_slice(&self.h_past);
        v.extend_from_slice(&self.h_self);
        v.extend_from_slice(&self.h_future);
        v
    }
}

/// Split the other events by end time: strictly earlier ends are past,
/// the rest (ties included) future.
pub fn bucket_events(i: usize, ends: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut past = Vec::new();
    let mut future = Vec::new();
    for (j, &e) in ends.iter().enumerate() {
        if j == i {
            continue;
        }
        if e < ends[i] {
            past.push(j);
        } else {
            future.push(j);
        }
    }
    (past, future)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl AttentionParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, init_std: f64) -> Result<Self> {
        Ok(AttentionParams {
            w: store.register_gaussian(&format!("{prefix}.w"), &[dim, dim], init_std)?,
            b: store.register_gaussian(&format!("{prefix}.b"), &[dim], init_std)?,
        })
    }

    /// `a_i = w_a·h_i + b_a`.
    pub fn query(&self, params: &Params, h_i: &[f64]) -> Vec<f64> {
        let w = params.get(self.w);
        let mut a = params.get(self.b).values().to_vec();
        let mut tmp = vec![0.0; a.len()];
        matvec(w.values(), w.rows(), w.cols(), h_i, &mut tmp);
        a.iter_mut().zip(&tmp).for_each(|(x, t)| *x += t);
        a
    }
}

/// Unnormalized weights `w_j = a_i·h_j`, or all ones when mean-pooling.
pub fn attention_weights(
    params: &Params,
    attn: &AttentionParams,
    h_i: &[f64],
    others: &[&[f64]],
    weighting: Weighting,
) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0; others.len()],
        Weighting::DotAttention => {
            let a = attn.query(params, h_i);
            others.iter().map(|h| dot(&a, h)).collect()
        }
    }
}

fn weighted_mean(weights: &[f64], hs: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if hs.is_empty() {
        return out;
    }
    for (w, h) in weights.iter().zip(hs) {
        out.iter_mut().zip(h.iter()).for_each(|(o, x)| *o += w * x);
    }
    let z = hs.len() as f64;
    out.iter_mut().for_each(|o| *o /= z);
    out
}

fn check_dims(i: usize, hiddens: &[Vec<f64>], ends: &[f64]) -> Result<usize> {
    if hiddens.len() != ends.len() {
        return Err(Error::shape("context", format!("{} hiddens vs {} end times", hiddens.len(), ends.len())));
    }
    if i >= hiddens.len() {
        return Err(Error::Index {
            op: "context",
            index: i,
            len: hiddens.len(),
        });
    }
    let d = hiddens[i].len();
    if hiddens.iter().any(|h| h.len() != d) {
        return Err(Error::shape("context", "event hiddens differ in length"));
    }
    Ok(d)
}

/// Context of event `i` among events with the given hiddens and end times.
pub fn context_vectors(
    i: usize,
    hiddens: &[Vec<f64>],
    ends: &[f64],
    params: &Params,
    attn: &AttentionParams,
    mode: ContextMode,
) -> Result<ContextBundle> {
    let d = check_dims(i, hiddens, ends)?;
    let h_i = &hiddens[i];
    let mut bundle = ContextBundle::isolated(h_i.clone());
    if mode.scope == ContextScope::None {
        return Ok(bundle);
    }
    let (past, future) = bucket_events(i, ends);
    let pick = |ix: &[usize]| ix.iter().map(|&j| hiddens[j].as_slice()).collect::<Vec<_>>();
    let past_h = pick(&past);
    bundle.h_past = weighted_mean(&attention_weights(params, attn, h_i, &past_h, mode.weighting), &past_h, d);
    if mode.scope == ContextScope::PastAndFuture {
        let fut_h = pick(&future);
        bundle.h_future = weighted_mean(&attention_weights(params, attn, h_i, &fut_h, mode.weighting), &fut_h, d);
    }
    Ok(bundle)
}

/// Accumulate into `w_a`, `b_a` the gradient reaching them through
/// `d_past` and `d_future`; the event hiddens are treated as constants.
#[allow(clippy::too_many_arguments)]
pub fn context_backward(
    i: usize,
    hiddens: &[Vec<f64>],
    ends: &[f64],
    grads: &mut Grads,
    attn: &AttentionParams,
    mode: ContextMode,
    d_past: &[f64],
    d_future: &[f64],
) -> Result<()> {
    let d = check_dims(i, hiddens, ends)?;
    if mode.scope == ContextScope::None || mode.weighting == Weighting::Uniform {
        return Ok(());
    }
    let (past, future) = bucket_events(i, ends);
    let mut da = vec![0.0; d];
    let mut bucket = |ix: &[usize], g: &[f64]| {
        let z = ix.len() as f64;
        for &j in ix {
            let dw = dot(g, &hiddens[j]) / z;
            da.iter_mut().zip(&hiddens[j]).for_each(|(a, h)| *a += dw * h);
        }
    };
    bucket(&past, d_past);
    if mode.scope == ContextScope::PastAndFuture {
        bucket(&future, d_future);
    }
    outer_acc(&da, &hiddens[i], grads.get_mut(attn.w).values_mut());
    grads
        .get_mut(attn.b)
        .values_mut()
        .iter_mut()
        .zip(&da)
        .for_each(|(g, x)| *g += x);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn attn_store(dim: usize, w: Tensor, b: Vec<f64>) -> (ParamStore, AttentionParams) {
        let mut store = ParamStore::new(0);
        let attn = AttentionParams {
            w: store.register("attn.w", w).unwrap(),
            b: store.register("attn.b", Tensor::vector(b)).unwrap(),
        };
        assert_eq!(store.value(attn.w).rows(), dim);
        (store, attn)
    }

    #[test]
    fn buckets() {
        assert_eq!(bucket_events(1, &[5.0, 10.0, 15.0]), (vec![0], vec![2]));
        assert_eq!(bucket_events(0, &[10.0, 10.0]), (vec![], vec![1]));
        assert_eq!(bucket_events(0, &[3.0]), (vec![], vec![]));
    }

    #[test]
    fn weights() {
        let (s, a) = attn_store(2, Tensor::identity(2), vec![0.0, 0.0]);
        let w = attention_weights(s.params(), &a, &[1.0, 0.0], &[&[2.0, 0.0]], Weighting::DotAttention);
        assert_eq!(w, vec![2.0]);
        let (s, a) = attn_store(2, Tensor::zeros(&[2, 2]), vec![1.0, 1.0]);
        let w = attention_weights(s.params(), &a, &[7.0, 7.0], &[&[3.0, -1.0]], Weighting::DotAttention);
        assert_eq!(w, vec![2.0]);
        let w = attention_weights(s.params(), &a, &[7.0, 7.0], &[&[3.0, -1.0], &[0.0, 9.0]], Weighting::Uniform);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn bundle_examples() {
        let (s, a) = attn_store(2, Tensor::identity(2), vec![0.0, 0.0]);
        let hs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let ends = [1.0, 2.0, 3.0];
        let full = ContextMode::from_variant("full").unwrap();
        let b = context_vectors(2, &hs, &ends, s.params(), &a, full).unwrap();
        assert_eq!(b.h_past, vec![0.5, 0.0]);
        assert_eq!(b.h_future, vec![0.0, 0.0]);
        let b = context_vectors(2, &hs, &ends, s.params(), &a, ContextMode::from_variant("full-attn").unwrap()).unwrap();
        assert_eq!(b.h_past, vec![0.5, 0.5]);
        let b = context_vectors(0, &hs, &ends, s.params(), &a, full).unwrap();
        assert_eq!(b.h_past, vec![0.0, 0.0]);
        let b = context_vectors(1, &hs, &ends, s.params(), &a, ContextMode::from_variant("none").unwrap()).unwrap();
        assert_eq!(b.concat(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = context_vectors(0, &hs, &ends, s.params(), &a, ContextMode::from_variant("online").unwrap()).unwrap();
        assert_eq!(b.h_future, vec![0.0, 0.0]);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ContextMode::VARIANTS {
            assert_eq!(ContextMode::from_variant(v).unwrap().variant(), v);
        }
        assert!(ContextMode::from_variant("fullish").is_err());
    }

    fn events() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (2usize..7).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), n),
                prop::collection::vec((0u8..6).prop_map(f64::from), n),
            )
        })
    }

    proptest! {
        #[test]
        fn buckets_partition_others(ends in prop::collection::vec(0.0f64..10.0, 1..10), i in 0usize..10) {
            let i = i % ends.len();
            let (p, f) = bucket_events(i, &ends);
            let mut all: Vec<usize> = p.iter().chain(&f).copied().collect();
            all.push(i);
            all.sort();
            prop_assert_eq!(all, (0..ends.len()).collect::<Vec<_>>());
            prop_assert!(p.iter().all(|j| !f.contains(j)));
        }

        #[test]
        fn uniform_is_bucket_mean((hs, ends) in events()) {
            let mut store = ParamStore::new(3);
            let a = AttentionParams::register(&mut store, "attn", 3, 1.0).unwrap();
            let mode = ContextMode::from_variant("full-attn").unwrap();
            let b = context_vectors(0, &hs, &ends, store.params(), &a, mode).unwrap();
            let (past, future) = bucket_events(0, &ends);
            for (ix, got) in [(past, &b.h_past), (future, &b.h_future)] {
                for d in 0..3 {
                    let mean = if ix.is_empty() {
                        0.0
                    } else {
                        ix.iter().map(|&j| hs[j][d]).sum::<f64>() / ix.len() as f64
                    };
                    prop_assert!((got[d] - mean).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn permutation_invariant((hs, ends) in events(), seed in 0u64..1000) {
            let mut store = ParamStore::new(seed);
            let a = AttentionParams::register(&mut store, "attn", 3, 1.0).unwrap();
            let mode = ContextMode::from_variant("full").unwrap();
            let base = context_vectors(0, &hs, &ends, store.params(), &a, mode).unwrap();
            // reverse everything except the reference event
            let mut order: Vec<usize> = (1..hs.len()).rev().collect();
            order.insert(0, 0);
            let hs2: Vec<_> = order.iter().map(|&j| hs[j].clone()).collect();
            let ends2: Vec<_> = order.iter().map(|&j| ends[j]).collect();
            let perm = context_vectors(0, &hs2, &ends2, store.params(), &a, mode).unwrap();
            for (x, y) in base.concat().iter().zip(perm.concat()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
