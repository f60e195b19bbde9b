//! Sentence and proposal encoders into the joint embedding space.

use super::rank::batch_margin_loss;
use super::RetrievalConfig;
use crate::captioning::bucket_events;
use crate::error::{Error, Result};
use crate::numerics::tensor::{add_assign, axpy, dot, matvec, matvec_t_acc, norm, outer_acc};
use crate::numerics::{Grads, Lstm, ParamId, ParamStore, Params, StepCache};

/// One video and its paragraph, with frozen proposal representations.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalItem {
    pub video_id: String,
    pub proposals: Vec<Vec<f64>>,
    pub proposal_ends: Vec<f64>,
    pub sentences: Vec<Vec<usize>>,
    pub sentence_ends: Vec<f64>,
}

impl RetrievalItem {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::Validation {
            video_id: self.video_id.clone(),
            detail: d.to_string(),
        });
        if self.proposals.is_empty() || self.sentences.is_empty() {
            return bad("retrieval item needs at least one proposal and one sentence");
        }
        if self.proposals.len() != self.proposal_ends.len() || self.sentences.len() != self.sentence_ends.len() {
            return bad("every proposal and sentence needs an end time");
        }
        if self.sentences.iter().any(Vec::is_empty) {
            return bad("empty sentence");
        }
        Ok(())
    }
}

/// Affine map into the joint space with an optional context term.
#[derive(Clone, Copy, Debug)]
struct Projection {
    w: ParamId,
    b: ParamId,
    ctx: Option<ParamId>,
}

impl Projection {
    fn register(store: &mut ParamStore, prefix: &str, input: usize, joint: usize, context: bool, std: f64) -> Result<Self> {
        Ok(Projection {
            w: store.register_gaussian(&format!("{prefix}.w"), &[joint, input], std)?,
            b: store.register_zeros(&format!("{prefix}.b"), &[joint])?,
            ctx: if context {
                Some(store.register_gaussian(&format!("{prefix}.ctx"), &[joint, 2 * input], std)?)
            } else {
                None
            },
        })
    }

    fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.w, self.b];
        v.extend(self.ctx);
        v
    }
}

/// Intermediate values of one projected set.
struct Projected {
    ctx: Vec<Vec<f64>>,
    raw: Vec<Vec<f64>>,
    unit: Vec<Vec<f64>>,
}

fn mean_of(rows: &[Vec<f64>], idx: &[usize], dim: usize, out: &mut [f64]) {
    if idx.is_empty() {
        return;
    }
    for &j in idx {
        add_assign(out, &rows[j]);
    }
    let inv = 1.0 / idx.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    debug_assert_eq!(out.len(), dim);
}

/// `x / |x|`, or the zero vector.
pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| v / n).collect()
}

fn normalize_backward(raw: &[f64], unit: &[f64], du: &[f64]) -> Vec<f64> {
    let n = norm(raw);
    if n == 0.0 {
        return vec![0.0; raw.len()];
    }
    let proj = dot(unit, du);
    du.iter().zip(unit).map(|(d, u)| (d - u * proj) / n).collect()
}

fn project(params: &Params, p: &Projection, inputs: &[Vec<f64>], ends: &[f64]) -> Projected {
    let w = params.get(p.w);
    let (j, d) = (w.rows(), w.cols());
    let mut out = Projected {
        ctx: Vec::new(),
        raw: Vec::new(),
        unit: Vec::new(),
    };
    for (i, x) in inputs.iter().enumerate() {
        let mut r = params.get(p.b).values().to_vec();
        let mut tmp = vec![0.0; j];
        matvec(w.values(), j, d, x, &mut tmp);
        add_assign(&mut r, &tmp);
        if let Some(c) = p.ctx {
            let (past, future) = bucket_events(i, ends);
            let mut ctx = vec![0.0; 2 * d];
            mean_of(inputs, &past, d, &mut ctx[..d]);
            mean_of(inputs, &future, d, &mut ctx[d..]);
            matvec(params.get(c).values(), j, 2 * d, &ctx, &mut tmp);
            add_assign(&mut r, &tmp);
            out.ctx.push(ctx);
        }
        out.unit.push(l2_normalize(&r));
        out.raw.push(r);
    }
    out
}

/// Accumulates parameter gradients and returns `∂/∂inputs`.
fn project_backward(
    params: &Params,
    grads: &mut Grads,
    p: &Projection,
    inputs: &[Vec<f64>],
    ends: &[f64],
    fwd: &Projected,
    du: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let w = params.get(p.w);
    let (j, d) = (w.rows(), w.cols());
    let mut dx = vec![vec![0.0; d]; inputs.len()];
    for i in 0..inputs.len() {
        let dr = normalize_backward(&fwd.raw[i], &fwd.unit[i], &du[i]);
        outer_acc(&dr, &inputs[i], grads.get_mut(p.w).values_mut());
        add_assign(grads.get_mut(p.b).values_mut(), &dr);
        matvec_t_acc(w.values(), j, d, &dr, &mut dx[i]);
        if let Some(c) = p.ctx {
            outer_acc(&dr, &fwd.ctx[i], grads.get_mut(c).values_mut());
            let mut dctx = vec![0.0; 2 * d];
            matvec_t_acc(params.get(c).values(), j, 2 * d, &dr, &mut dctx);
            let (past, future) = bucket_events(i, ends);
            for (idx, half) in [(&past, &dctx[..d]), (&future, &dctx[d..])] {
                let inv = 1.0 / idx.len().max(1) as f64;
                for &k in idx {
                    axpy(inv, half, &mut dx[k]);
                }
            }
        }
    }
    dx
}

/// Encoded paragraph with the caches needed for backpropagation.
pub struct EncodedParagraph {
    pub units: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
    proj: Projected,
    caches: Vec<Vec<StepCache>>,
}

/// Encoded video proposals.
pub struct EncodedVideo {
    pub units: Vec<Vec<f64>>,
    proj: Projected,
}

#[derive(Clone, Debug)]
pub struct RetrievalModel {
    pub config: RetrievalConfig,
    pub vocab_size: usize,
    pub proposal_dim: usize,
    embed: ParamId,
    lstm: Lstm,
    sentence: Projection,
    proposal: Projection,
}

impl RetrievalModel {
    pub fn register(store: &mut ParamStore, config: &RetrievalConfig, vocab_size: usize, proposal_dim: usize) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 || proposal_dim == 0 {
            return Err(Error::Config("retrieval needs a vocabulary and proposal features".into()));
        }
        let std = config.init_std;
        let embed = store.register_gaussian("retrieval.embed", &[vocab_size, config.embed_dim], std)?;
        let lstm = Lstm::register(store, "retrieval.lstm", config.embed_dim, config.hidden_size, config.num_layers, std)?;
        let sentence = Projection::register(store, "retrieval.sent", config.hidden_size, config.joint_dim, config.context, std)?;
        let proposal = Projection::register(store, "retrieval.prop", proposal_dim, config.joint_dim, config.context, std)?;
        Ok(RetrievalModel {
            config: config.clone(),
            vocab_size,
            proposal_dim,
            embed,
            lstm,
            sentence,
            proposal,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embed];
        ids.extend(self.lstm.param_ids());
        ids.extend(self.sentence.ids());
        ids.extend(self.proposal.ids());
        ids
    }

    fn sentence_hidden(&self, params: &Params, tokens: &[usize]) -> Result<(Vec<f64>, Vec<StepCache>)> {
        if tokens.is_empty() {
            return Err(Error::Input("cannot encode an empty sentence".into()));
        }
        let emb = params.get(self.embed);
        let mut state = self.lstm.zero_state();
        let mut caches = Vec::with_capacity(tokens.len());
        for &t in tokens {
            if t >= self.vocab_size {
                return Err(Error::Index {
                    op: "sentence encoder",
                    index: t,
                    len: self.vocab_size,
                });
            }
            let (next, cache) = self.lstm.step(params, emb.row(t), &state)?;
            state = next;
            caches.push(cache);
        }
        Ok((state.top().to_vec(), caches))
    }

    /// Joint-space vectors for the sentences of one paragraph.
    pub fn encode_paragraph(&self, params: &Params, sentences: &[Vec<usize>], ends: &[f64]) -> Result<EncodedParagraph> {
        if sentences.len() != ends.len() {
            return Err(Error::shape("encode_paragraph", "one end time per sentence"));
        }
        let mut hiddens = Vec::with_capacity(sentences.len());
        let mut caches = Vec::with_capacity(sentences.len());
        for s in sentences {
            let (h, c) = self.sentence_hidden(params, s)?;
            hiddens.push(h);
            caches.push(c);
        }
        let proj = project(params, &self.sentence, &hiddens, ends);
        Ok(EncodedParagraph {
            units: proj.unit.clone(),
            hiddens,
            proj,
            caches,
        })
    }

    /// A single context-free sentence vector.
    pub fn encode_sentence(&self, params: &Params, tokens: &[usize]) -> Result<Vec<f64>> {
        let enc = self.encode_paragraph(params, &[tokens.to_vec()], &[0.0])?;
        Ok(enc.units.into_iter().next().expect("one sentence"))
    }

    pub fn encode_video(&self, params: &Params, proposals: &[Vec<f64>], ends: &[f64]) -> Result<EncodedVideo> {
        if proposals.len() != ends.len() {
            return Err(Error::shape("encode_video", "one end time per proposal"));
        }
        if let Some(p) = proposals.iter().find(|p| p.len() != self.proposal_dim) {
            return Err(Error::shape(
                "encode_video",
                format!("proposal vector has {} entries, expected {}", p.len(), self.proposal_dim),
            ));
        }
        let proj = project(params, &self.proposal, proposals, ends);
        Ok(EncodedVideo {
            units: proj.unit.clone(),
            proj,
        })
    }

    fn paragraph_backward(&self, params: &Params, grads: &mut Grads, enc: &EncodedParagraph, ends: &[f64], du: &[Vec<f64>], sentences: &[Vec<usize>]) {
        let dh = project_backward(params, grads, &self.sentence, &enc.hiddens, ends, &enc.proj, du);
        let layers = self.lstm.layers().len();
        for (k, tokens) in sentences.iter().enumerate() {
            let (mut dhs, mut dcs) = self.lstm.zero_grad_state();
            add_assign(&mut dhs[layers - 1], &dh[k]);
            for (t, cache) in enc.caches[k].iter().enumerate().rev() {
                let dx = self.lstm.step_backward(params, grads, cache, &mut dhs, &mut dcs);
                add_assign(grads.get_mut(self.embed).row_mut(tokens[t]), &dx);
            }
        }
    }

    /// Score matrix `s[paragraph][video]` over `items`.
    pub fn score_matrix(&self, params: &Params, items: &[RetrievalItem]) -> Result<Vec<Vec<f64>>> {
        let paras = items
            .iter()
            .map(|it| self.encode_paragraph(params, &it.sentences, &it.sentence_ends))
            .collect::<Result<Vec<_>>>()?;
        let videos = items
            .iter()
            .map(|it| self.encode_video(params, &it.proposals, &it.proposal_ends))
            .collect::<Result<Vec<_>>>()?;
        Ok(paras
            .iter()
            .map(|p| videos.iter().map(|v| unit_score(&p.units, &v.units).0).collect())
            .collect())
    }

    /// Bidirectional margin loss over a batch whose items pair up on the
    /// diagonal; accumulates into `grads` when given.
    pub fn batch_loss(&self, params: &Params, grads: Option<&mut Grads>, items: &[RetrievalItem]) -> Result<f64> {
        for it in items {
            it.validate()?;
        }
        let paras = items
            .iter()
            .map(|it| self.encode_paragraph(params, &it.sentences, &it.sentence_ends))
            .collect::<Result<Vec<_>>>()?;
        let videos = items
            .iter()
            .map(|it| self.encode_video(params, &it.proposals, &it.proposal_ends))
            .collect::<Result<Vec<_>>>()?;
        let scored: Vec<Vec<(f64, Vec<usize>)>> = paras
            .iter()
            .map(|p| videos.iter().map(|v| unit_score(&p.units, &v.units)).collect())
            .collect();
        let s: Vec<Vec<f64>> = scored.iter().map(|r| r.iter().map(|x| x.0).collect()).collect();
        let (loss, ds) = batch_margin_loss(&s, self.config.margin);
        let Some(grads) = grads else {
            return Ok(loss);
        };
        let mut du_s: Vec<Vec<Vec<f64>>> = paras.iter().map(|p| vec![vec![0.0; self.config.joint_dim]; p.units.len()]).collect();
        let mut du_v: Vec<Vec<Vec<f64>>> = videos.iter().map(|v| vec![vec![0.0; self.config.joint_dim]; v.units.len()]).collect();
        for (a, para) in paras.iter().enumerate() {
            let inv = 1.0 / para.units.len() as f64;
            for (b, video) in videos.iter().enumerate() {
                let g = ds[a][b] * inv;
                if g == 0.0 {
                    continue;
                }
                for (k, &j) in scored[a][b].1.iter().enumerate() {
                    axpy(g, &video.units[j], &mut du_s[a][k]);
                    axpy(g, &para.units[k], &mut du_v[b][j]);
                }
            }
        }
        for (i, it) in items.iter().enumerate() {
            self.paragraph_backward(params, grads, &paras[i], &it.sentence_ends, &du_s[i], &it.sentences);
            project_backward(params, grads, &self.proposal, &it.proposals, &it.proposal_ends, &videos[i].proj, &du_v[i]);
        }
        Ok(loss)
    }
}

/// Mean over sentences of the best unit-vector dot product, with the
/// chosen proposal per sentence (first on ties).
fn unit_score(sentences: &[Vec<f64>], proposals: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let mut total = 0.0;
    let mut picks = Vec::with_capacity(sentences.len());
    for s in sentences {
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, p) in proposals.iter().enumerate() {
            let c = dot(s, p);
            if c > best.0 {
                best = (c, j);
            }
        }
        total += best.0;
        picks.push(best.1);
    }
    (total / sentences.len() as f64, picks)
}
