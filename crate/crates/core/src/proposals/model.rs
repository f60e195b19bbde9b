//! Multi-stride proposal LSTM.
//!
//! Each stride owns an independent single-layer LSTM over the strided
//! feature rows and a `K`-way logistic head. At strided step `m` the head's
//! score `k` (1-based) rates the interval of length `k·s·δ/fps` ending at
//! `(m·s + 1)·δ/fps`.

use std::cmp::Ordering;

use super::targets::{make_targets, proposal_loss_logits, StrideTargets};
use super::{EventProposal, ProposalConfig};
use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::tensor::{matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::numerics::{lstm_cell, lstm_cell_backward, CellCache, Grads, LstmLayer, ParamId, ParamStore, Params};

#[derive(Clone, Debug)]
pub struct StrideBranch {
    pub stride: usize,
    pub lstm: LstmLayer,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct ProposalModel {
    config: ProposalConfig,
    input_dim: usize,
    branches: Vec<StrideBranch>,
}

/// Forward results of one stride over a whole video.
#[derive(Clone, Debug)]
pub struct BranchPass {
    pub stride: usize,
    pub hiddens: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    caches: Vec<CellCache>,
}

/// `[start, end]` of anchor `k` (1-based) at strided step `m`, clipped to `[0, duration]`.
pub fn anchor_interval(m: usize, k: usize, stride: usize, window: f64, duration: f64) -> (f64, f64) {
    let end = (m * stride + 1) as f64 * window;
    let start = end - (k * stride) as f64 * window;
    (start.max(0.0), end.min(duration))
}

/// Row indices `0, s, 2s, …` below `n`.
pub fn sample_stride(n_rows: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::Range("stride must be at least 1".into()));
    }
    if n_rows == 0 || stride > n_rows {
        return Err(Error::Input(format!("stride {stride} leaves no rows of a {n_rows}-row sequence")));
    }
    Ok((0..n_rows).step_by(stride).collect())
}

/// Deterministic ranking: score descending, then earlier start, then shorter.
pub fn rank_order(a: &EventProposal, b: &EventProposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.t_start.total_cmp(&b.t_start))
        .then((a.t_end - a.t_start).total_cmp(&(b.t_end - b.t_start)))
        .then(a.stride.cmp(&b.stride))
        .then(a.step.cmp(&b.step))
        .then(a.anchor.cmp(&b.anchor))
}

impl ProposalModel {
    pub fn register(store: &mut ParamStore, config: &ProposalConfig, input_dim: usize, init_std: f64) -> Result<Self> {
        config.validate()?;
        let (hs, k) = (config.hidden_size, config.k);
        let branches = config
            .strides
            .iter()
            .map(|&s| {
                let prefix = format!("proposal.s{s}");
                Ok(StrideBranch {
                    stride: s,
                    lstm: LstmLayer::register(store, &format!("{prefix}.lstm"), input_dim, hs, init_std)?,
                    head_w: store.register_gaussian(&format!("{prefix}.head.w"), &[k, hs], init_std)?,
                    head_b: store.register_gaussian(&format!("{prefix}.head.b"), &[k], init_std)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProposalModel {
            config: config.clone(),
            input_dim,
            branches,
        })
    }

    /// Rebuild handles from an existing store (e.g. after loading a checkpoint).
    pub fn attach(store: &ParamStore, config: &ProposalConfig, input_dim: usize) -> Result<Self> {
        let find = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| Error::Incompatible(format!("missing parameter {name}")))
        };
        let branches = config
            .strides
            .iter()
            .map(|&s| {
                let p = format!("proposal.s{s}");
                Ok(StrideBranch {
                    stride: s,
                    lstm: LstmLayer {
                        w_x: find(format!("{p}.lstm.w_x"))?,
                        w_h: find(format!("{p}.lstm.w_h"))?,
                        bias: find(format!("{p}.lstm.bias"))?,
                        input: input_dim,
                        hidden: config.hidden_size,
                    },
                    head_w: find(format!("{p}.head.w"))?,
                    head_b: find(format!("{p}.head.b"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProposalModel {
            config: config.clone(),
            input_dim,
            branches,
        })
    }

    pub fn config(&self) -> &ProposalConfig {
        &self.config
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn branches(&self) -> &[StrideBranch] {
        &self.branches
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.branches
            .iter()
            .flat_map(|b| {
                let mut ids = b.lstm.param_ids().to_vec();
                ids.extend([b.head_w, b.head_b]);
                ids
            })
            .collect()
    }

    fn check_input(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.rows() == 0 {
            return Err(Error::Input(format!("{}: empty feature sequence", seq.video_id)));
        }
        if seq.dim() != self.input_dim {
            return Err(Error::shape(
                "proposal input",
                format!("model expects D={} but {} has D={}", self.input_dim, seq.video_id, seq.dim()),
            ));
        }
        Ok(())
    }

    /// Run one stride over `rows` of `seq`, starting from a zero state.
    fn run_rows(&self, params: &Params, branch: &StrideBranch, seq: &FeatureSequence, rows: &[usize]) -> Result<BranchPass> {
        let hs = self.config.hidden_size;
        let k = self.config.k;
        let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
        let mut pass = BranchPass {
            stride: branch.stride,
            hiddens: Vec::with_capacity(rows.len()),
            logits: Vec::with_capacity(rows.len()),
            caches: Vec::with_capacity(rows.len()),
        };
        let w = params.get(branch.head_w).values();
        let b = params.get(branch.head_b).values();
        for &r in rows {
            let cache = lstm_cell(params, &branch.lstm, seq.row(r), &h, &c)?;
            h = cache.h.clone();
            c = cache.c.clone();
            let mut z = b.to_vec();
            let mut tmp = vec![0.0; k];
            matvec(w, k, hs, &h, &mut tmp);
            z.iter_mut().zip(&tmp).for_each(|(zi, ti)| *zi += ti);
            pass.hiddens.push(h.clone());
            pass.logits.push(z);
            pass.caches.push(cache);
        }
        Ok(pass)
    }

    /// Forward pass of every stride over the whole video.
    pub fn stream_passes(&self, params: &Params, seq: &FeatureSequence) -> Result<Vec<BranchPass>> {
        self.check_input(seq)?;
        self.branches
            .iter()
            .map(|b| {
                // strides longer than the video still see its first row
                let rows: Vec<usize> = (0..seq.rows()).step_by(b.stride).collect();
                self.run_rows(params, b, seq, &rows)
            })
            .collect()
    }

    /// Single-pass proposals over all strides, ranked deterministically.
    /// With `retain_all` every anchor is returned, otherwise only those
    /// scoring at least the configured threshold.
    pub fn propose_stream(&self, params: &Params, seq: &FeatureSequence, retain_all: bool) -> Result<Vec<EventProposal>> {
        let passes = self.stream_passes(params, seq)?;
        let mut out = Vec::new();
        for pass in &passes {
            out.extend(self.pass_proposals(pass, seq, retain_all));
        }
        out.sort_by(rank_order);
        Ok(out)
    }

    pub(crate) fn pass_proposals(&self, pass: &BranchPass, seq: &FeatureSequence, retain_all: bool) -> Vec<EventProposal> {
        let window = seq.window_seconds();
        let duration = seq.duration();
        let mut out = Vec::new();
        for (m, z) in pass.logits.iter().enumerate() {
            for (kk, &logit) in z.iter().enumerate() {
                let score = sigmoid(logit);
                if !retain_all && score < self.config.score_threshold {
                    continue;
                }
                let (t_start, t_end) = anchor_interval(m, kk + 1, pass.stride, window, duration);
                out.push(EventProposal {
                    t_start,
                    t_end,
                    score,
                    h: pass.hiddens[m].clone(),
                    stride: pass.stride,
                    step: m,
                    anchor: kk + 1,
                });
            }
        }
        out
    }

    /// Weighted BCE over every stride's anchors, with gradients when `grads` is given.
    pub fn loss(&self, params: &Params, grads: Option<&mut Grads>, seq: &FeatureSequence, gt: &[(f64, f64)]) -> Result<f64> {
        let passes = self.stream_passes(params, seq)?;
        let targets = make_targets(gt, seq, &self.config)?;
        self.loss_from_passes(params, grads, &passes, &targets)
    }

    pub(crate) fn loss_from_passes(
        &self,
        params: &Params,
        grads: Option<&mut Grads>,
        passes: &[BranchPass],
        targets: &[StrideTargets],
    ) -> Result<f64> {
        let logits: Vec<&[Vec<f64>]> = passes.iter().map(|p| p.logits.as_slice()).collect();
        let (loss, dlogits) = proposal_loss_logits(&logits, targets)?;
        if let Some(grads) = grads {
            for ((pass, branch), dz) in passes.iter().zip(&self.branches).zip(&dlogits) {
                self.backward_branch(params, grads, branch, pass, dz);
            }
        }
        Ok(loss)
    }

    fn backward_branch(&self, params: &Params, grads: &mut Grads, branch: &StrideBranch, pass: &BranchPass, dlogits: &[Vec<f64>]) {
        let hs = self.config.hidden_size;
        let k = self.config.k;
        let w = params.get(branch.head_w).values();
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        for m in (0..pass.hiddens.len()).rev() {
            let dz = &dlogits[m];
            outer_acc(dz, &pass.hiddens[m], grads.get_mut(branch.head_w).values_mut());
            grads
                .get_mut(branch.head_b)
                .values_mut()
                .iter_mut()
                .zip(dz)
                .for_each(|(g, d)| *g += d);
            let mut dh = dh_next.clone();
            matvec_t_acc(w, k, hs, dz, &mut dh);
            let (_, dh_prev, dc_prev) = lstm_cell_backward(params, grads, &branch.lstm, &pass.caches[m], &dh, &dc_next);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
    }

    /// Index of the stride used to represent an interval of `length` seconds:
    /// the smallest whose longest anchor covers it, else the largest.
    pub fn branch_for_length(&self, length: f64, window: f64) -> usize {
        let k = self.config.k as f64;
        self.branches
            .iter()
            .position(|b| k * b.stride as f64 * window >= length - 1e-9)
            .unwrap_or(self.branches.len() - 1)
    }

    /// Hidden state after running the matching stride's LSTM over just the
    /// rows of `[t_start, t_end)`.
    pub fn hidden_over_interval(&self, params: &Params, seq: &FeatureSequence, t_start: f64, t_end: f64) -> Result<Vec<f64>> {
        self.check_input(seq)?;
        if !(t_start < t_end) {
            return Err(Error::Range(format!("degenerate interval [{t_start}, {t_end}]")));
        }
        let window = seq.window_seconds();
        let branch = &self.branches[self.branch_for_length(t_end - t_start, window)];
        let first = seq.time_to_row(t_start)?;
        let last = (((t_end / window).ceil() as usize).saturating_sub(1)).clamp(first, seq.rows() - 1);
        let rows: Vec<usize> = (first..=last).step_by(branch.stride).collect();
        let pass = self.run_rows(params, branch, seq, &rows)?;
        Ok(pass.hiddens.last().cloned().expect("at least one row"))
    }

    /// Hidden state of the stride LSTM at the anchor `(stride, step)` of a
    /// full-video pass.
    pub fn hidden_at(&self, passes: &[BranchPass], stride: usize, step: usize) -> Option<Vec<f64>> {
        passes
            .iter()
            .find(|p| p.stride == stride)
            .and_then(|p| p.hiddens.get(step).cloned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Tensor};

    fn seq(n: usize, d: usize, delta: u32, fps: f64, seed: u64) -> FeatureSequence {
        let mut rng = crate::numerics::SeededRng::new(seed);
        let values = (0..n * d).map(|_| rng.gaussian()).collect();
        FeatureSequence::new("v", delta, fps, Tensor::matrix(n, d, values).unwrap()).unwrap()
    }

    fn config(strides: Vec<usize>, k: usize, hidden: usize) -> ProposalConfig {
        ProposalConfig {
            strides,
            k,
            hidden_size: hidden,
            ..ProposalConfig::default()
        }
    }

    #[test]
    fn stride_sampling() {
        assert_eq!(sample_stride(8, 2).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(sample_stride(5, 1).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_stride(5, 4).unwrap(), vec![0, 4]);
        assert!(sample_stride(3, 4).is_err());
    }

    #[test]
    fn retain_all_count() {
        let mut store = ParamStore::new(1);
        let cfg = config(vec![1, 2], 2, 4);
        let model = ProposalModel::register(&mut store, &cfg, 3, 0.1).unwrap();
        let props = model.propose_stream(store.params(), &seq(8, 3, 16, 16.0, 0), true).unwrap();
        assert_eq!(props.len(), 24);
    }

    #[test]
    fn anchor_offsets() {
        assert_eq!(anchor_interval(1, 2, 1, 0.5, 10.0), (0.0, 1.0));
        assert_eq!(anchor_interval(0, 3, 1, 0.5, 10.0), (0.0, 0.5));
        assert_eq!(anchor_interval(3, 2, 2, 1.0, 100.0), (3.0, 7.0));
    }

    #[test]
    fn zero_network_scores_half() {
        let mut store = ParamStore::new(1);
        let cfg = config(vec![1, 4], 3, 5);
        let model = ProposalModel::register(&mut store, &cfg, 2, 0.0).unwrap();
        let props = model.propose_stream(store.params(), &seq(9, 2, 16, 16.0, 1), true).unwrap();
        assert!(props.iter().all(|p| p.score == 0.5));
        assert!(props.iter().all(|p| p.t_start < p.t_end && p.t_start >= 0.0));
    }

    #[test]
    fn threshold_filters_and_ranking_is_sorted() {
        let mut store = ParamStore::new(4);
        let cfg = config(vec![1, 2, 4], 4, 6);
        let model = ProposalModel::register(&mut store, &cfg, 3, 0.5).unwrap();
        let s = seq(12, 3, 16, 16.0, 2);
        let all = model.propose_stream(store.params(), &s, true).unwrap();
        let kept = model.propose_stream(store.params(), &s, false).unwrap();
        assert_eq!(kept.len(), all.iter().filter(|p| p.score >= cfg.score_threshold).count());
        assert!(all.windows(2).all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn stride_order_does_not_change_output() {
        let s = seq(10, 3, 16, 16.0, 3);
        let mut a_store = ParamStore::new(5);
        let a = ProposalModel::register(&mut a_store, &config(vec![1, 2, 4], 3, 4), 3, 0.3).unwrap();
        // same weights, branches visited in reverse order
        let mut b = a.clone();
        b.branches.reverse();
        let pa = a.propose_stream(a_store.params(), &s, true).unwrap();
        let pb = b.propose_stream(a_store.params(), &s, true).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut store = ParamStore::new(8);
        let cfg = config(vec![1, 2], 3, 3);
        let model = ProposalModel::register(&mut store, &cfg, 2, 0.4).unwrap();
        let s = seq(7, 2, 16, 16.0, 9);
        let gt = [(1.0, 3.0), (2.0, 6.0)];
        let err = grad_check(&mut store, 1e-5, |p, g| model.loss(p, Some(g), &s, &gt).unwrap()).unwrap();
        assert!(err < 1e-4, "max rel error {err}");
    }

    #[test]
    fn interval_hidden_uses_interval_rows_only() {
        let mut store = ParamStore::new(2);
        let model = ProposalModel::register(&mut store, &config(vec![1, 2], 4, 3), 2, 0.3).unwrap();
        let s = seq(12, 2, 16, 16.0, 4);
        let h = model.hidden_over_interval(store.params(), &s, 3.0, 6.0).unwrap();
        // a sequence whose rows before the interval differ gives the same hidden
        let mut values = s.matrix().values().to_vec();
        values[..6].iter_mut().for_each(|v| *v += 5.0);
        let s2 = FeatureSequence::new("v", 16, 16.0, Tensor::matrix(12, 2, values).unwrap()).unwrap();
        assert_eq!(model.hidden_over_interval(store.params(), &s2, 3.0, 6.0).unwrap(), h);
        assert_eq!(model.branch_for_length(3.0, 1.0), 0);
        assert_eq!(model.branch_for_length(5.0, 1.0), 1);
        assert_eq!(model.branch_for_length(50.0, 1.0), 1);
    }

    #[test]
    fn empty_or_mismatched_input() {
        let mut store = ParamStore::new(2);
        let model = ProposalModel::register(&mut store, &config(vec![1], 2, 3), 4, 0.3).unwrap();
        assert!(model.propose_stream(store.params(), &seq(5, 3, 16, 16.0, 0), true).is_err());
    }
}
