//! Context-conditioned caption LSTM: teacher-forced loss and decoding.

use super::beam::{beam_search, greedy_decode, DecodedCaption, StepModel};
use super::context::{context_backward, context_vectors, AttentionParams, ContextBundle, ContextMode};
use super::CaptionConfig;
use crate::corpus::{EOS, SOS};
use crate::error::{Error, Result};
use crate::numerics::tensor::{add_assign, matvec, matvec_t_acc, outer_acc};
use crate::numerics::{log_softmax, softmax_xent, Grads, Lstm, LstmLayer, LstmState, ParamId, ParamStore, Params, StepCache};

#[derive(Clone, Debug)]
pub struct CaptionModel {
    config: CaptionConfig,
    vocab_size: usize,
    context_dim: usize,
    pub embed: ParamId,
    pub in_w: ParamId,
    pub in_b: ParamId,
    pub lstm: Lstm,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub attn: AttentionParams,
}

const PREFIX: &str = "caption";

impl CaptionModel {
    /// `context_dim` is the proposal hidden size `H`; the projected input
    /// consumes the `3H` concatenated bundle.
    pub fn register(
        store: &mut ParamStore,
        config: &CaptionConfig,
        vocab_size: usize,
        context_dim: usize,
        init_std: f64,
    ) -> Result<Self> {
        config.validate()?;
        let (e, h) = (config.embed_dim, config.hidden_size);
        Ok(CaptionModel {
            config: config.clone(),
            vocab_size,
            context_dim,
            embed: store.register_gaussian(&format!("{PREFIX}.embed"), &[vocab_size, e], init_std)?,
            in_w: store.register_gaussian(&format!("{PREFIX}.in.w"), &[e, 3 * context_dim], init_std)?,
            in_b: store.register_gaussian(&format!("{PREFIX}.in.b"), &[e], init_std)?,
            lstm: Lstm::register(store, &format!("{PREFIX}.lstm"), e, h, config.num_layers, init_std)?,
            out_w: store.register_gaussian(&format!("{PREFIX}.out.w"), &[vocab_size, h], init_std)?,
            out_b: store.register_gaussian(&format!("{PREFIX}.out.b"), &[vocab_size], init_std)?,
            attn: AttentionParams::register(store, &format!("{PREFIX}.attn"), context_dim, init_std)?,
        })
    }

    /// Rebuild handles from a store holding a registered model.
    pub fn attach(store: &ParamStore, config: &CaptionConfig, vocab_size: usize, context_dim: usize) -> Result<Self> {
        let find = |name: String, dims: &[usize]| {
            let id = store
                .id(&name)
                .ok_or_else(|| Error::Incompatible(format!("missing parameter {name}")))?;
            if store.value(id).dims() != dims {
                return Err(Error::Incompatible(format!(
                    "parameter {name} has dims {:?}, expected {dims:?}",
                    store.value(id).dims()
                )));
            }
            Ok(id)
        };
        let (e, h) = (config.embed_dim, config.hidden_size);
        let layers = (0..config.num_layers)
            .map(|l| {
                let p = format!("{PREFIX}.lstm.l{l}");
                let inp = if l == 0 { e } else { h };
                Ok(LstmLayer {
                    w_x: find(format!("{p}.w_x"), &[4 * h, inp])?,
                    w_h: find(format!("{p}.w_h"), &[4 * h, h])?,
                    bias: find(format!("{p}.bias"), &[4 * h])?,
                    input: inp,
                    hidden: h,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CaptionModel {
            config: config.clone(),
            vocab_size,
            context_dim,
            embed: find(format!("{PREFIX}.embed"), &[vocab_size, e])?,
            in_w: find(format!("{PREFIX}.in.w"), &[e, 3 * context_dim])?,
            in_b: find(format!("{PREFIX}.in.b"), &[e])?,
            lstm: Lstm::from_layers(layers),
            out_w: find(format!("{PREFIX}.out.w"), &[vocab_size, h])?,
            out_b: find(format!("{PREFIX}.out.b"), &[vocab_size])?,
            attn: AttentionParams {
                w: find(format!("{PREFIX}.attn.w"), &[context_dim, context_dim])?,
                b: find(format!("{PREFIX}.attn.b"), &[context_dim])?,
            },
        })
    }

    pub fn config(&self) -> &CaptionConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embed, self.in_w, self.in_b];
        ids.extend(self.lstm.param_ids());
        ids.extend([self.out_w, self.out_b, self.attn.w, self.attn.b]);
        ids
    }

    /// Projection of the concatenated bundle into the word-input space.
    pub fn context_input(&self, params: &Params, bundle: &ContextBundle) -> Result<Vec<f64>> {
        if [&bundle.h_past, &bundle.h_self, &bundle.h_future]
            .iter()
            .any(|v| v.len() != self.context_dim)
        {
            return Err(Error::shape(
                "caption context",
                format!("bundle parts must have dimension {}", self.context_dim),
            ));
        }
        let e = self.config.embed_dim;
        let mut x = params.get(self.in_b).values().to_vec();
        let mut tmp = vec![0.0; e];
        matvec(params.get(self.in_w).values(), e, 3 * self.context_dim, &bundle.concat(), &mut tmp);
        add_assign(&mut x, &tmp);
        Ok(x)
    }

    fn word_input(&self, params: &Params, token: usize, ctx: &[f64]) -> Result<Vec<f64>> {
        if token >= self.vocab_size {
            return Err(Error::Index {
                op: "caption embedding",
                index: token,
                len: self.vocab_size,
            });
        }
        let mut x = params.get(self.embed).row(token).to_vec();
        if self.config.inject_every_step {
            add_assign(&mut x, ctx);
        }
        Ok(x)
    }

    fn logits(&self, params: &Params, h: &[f64]) -> Vec<f64> {
        let mut z = params.get(self.out_b).values().to_vec();
        let mut tmp = vec![0.0; self.vocab_size];
        matvec(params.get(self.out_w).values(), self.vocab_size, self.config.hidden_size, h, &mut tmp);
        add_assign(&mut z, &tmp);
        z
    }

    /// State after the context step.
    fn prime(&self, params: &Params, ctx: &[f64]) -> Result<(LstmState, StepCache)> {
        self.lstm.step(params, ctx, &self.lstm.zero_state())
    }

    /// Logits after each input of `prefix` (which starts with SOS).
    pub fn logits_sequence(&self, params: &Params, bundle: &ContextBundle, prefix: &[usize]) -> Result<Vec<Vec<f64>>> {
        if prefix.first() != Some(&SOS) {
            return Err(Error::Input("caption prefix must start with SOS".into()));
        }
        if prefix.len() > crate::corpus::MAX_SENTENCE_LEN + 1 {
            return Err(Error::Input(format!("caption prefix of length {} exceeds 31", prefix.len())));
        }
        let ctx = self.context_input(params, bundle)?;
        let (mut state, _) = self.prime(params, &ctx)?;
        let mut out = Vec::with_capacity(prefix.len());
        for &tok in prefix {
            let x = self.word_input(params, tok, &ctx)?;
            state = self.lstm.step(params, &x, &state)?.0;
            out.push(self.logits(params, state.top()));
        }
        Ok(out)
    }

    /// Teacher-forced cross-entropy averaged over the word positions of
    /// `sentence` up to and including its first EOS. With `grads`, also
    /// accumulates parameter gradients and returns the gradient w.r.t. the
    /// concatenated bundle.
    pub fn caption_loss(
        &self,
        params: &Params,
        grads: Option<&mut Grads>,
        bundle: &ContextBundle,
        sentence: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        let end = sentence
            .iter()
            .position(|&t| t == EOS)
            .ok_or_else(|| Error::Input("caption sentence is not EOS-terminated".into()))?;
        if end == 0 {
            return Err(Error::Input("empty caption sentence".into()));
        }
        let targets = &sentence[..=end];
        if targets.len() > crate::corpus::MAX_SENTENCE_LEN + 1 {
            return Err(Error::Input(format!("caption of {} words exceeds the cap", end)));
        }
        let ctx = self.context_input(params, bundle)?;
        let (mut state, cache0) = self.prime(params, &ctx)?;
        let mut inputs = Vec::with_capacity(targets.len());
        let mut caches = Vec::with_capacity(targets.len());
        let mut tops = Vec::with_capacity(targets.len());
        let mut dlogits = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        let scale = 1.0 / targets.len() as f64;
        let mut prev = SOS;
        for &target in targets {
            let x = self.word_input(params, prev, &ctx)?;
            let (next, cache) = self.lstm.step(params, &x, &state)?;
            let (l, g) = softmax_xent(&self.logits(params, next.top()), target)?;
            loss += l;
            dlogits.push(g);
            tops.push(next.top().to_vec());
            inputs.push(prev);
            caches.push(cache);
            state = next;
            prev = target;
        }
        loss *= scale;
        let Some(grads) = grads else {
            return Ok((loss, Vec::new()));
        };

        let (v, hs, e) = (self.vocab_size, self.config.hidden_size, self.config.embed_dim);
        let top = self.lstm.layers().len() - 1;
        let (mut dh, mut dc) = self.lstm.zero_grad_state();
        let mut dctx = vec![0.0; e];
        for t in (0..targets.len()).rev() {
            let dz: Vec<f64> = dlogits[t].iter().map(|g| g * scale).collect();
            outer_acc(&dz, &tops[t], grads.get_mut(self.out_w).values_mut());
            add_assign(grads.get_mut(self.out_b).values_mut(), &dz);
            matvec_t_acc(params.get(self.out_w).values(), v, hs, &dz, &mut dh[top]);
            let dx = self.lstm.step_backward(params, grads, &caches[t], &mut dh, &mut dc);
            add_assign(grads.get_mut(self.embed).row_mut(inputs[t]), &dx);
            if self.config.inject_every_step {
                add_assign(&mut dctx, &dx);
            }
        }
        let dx0 = self.lstm.step_backward(params, grads, &cache0, &mut dh, &mut dc);
        add_assign(&mut dctx, &dx0);
        outer_acc(&dctx, &bundle.concat(), grads.get_mut(self.in_w).values_mut());
        add_assign(grads.get_mut(self.in_b).values_mut(), &dctx);
        let mut dbundle = vec![0.0; 3 * self.context_dim];
        matvec_t_acc(params.get(self.in_w).values(), e, 3 * self.context_dim, &dctx, &mut dbundle);
        Ok((loss, dbundle))
    }

    /// Loss for event `i` of a set with the given hiddens and end times,
    /// with gradients through the context attention when `grads` is given.
    #[allow(clippy::too_many_arguments)]
    pub fn event_loss(
        &self,
        params: &Params,
        grads: Option<&mut Grads>,
        i: usize,
        hiddens: &[Vec<f64>],
        ends: &[f64],
        mode: ContextMode,
        sentence: &[usize],
    ) -> Result<f64> {
        let bundle = context_vectors(i, hiddens, ends, params, &self.attn, mode)?;
        match grads {
            None => Ok(self.caption_loss(params, None, &bundle, sentence)?.0),
            Some(grads) => {
                let (loss, db) = self.caption_loss(params, Some(&mut *grads), &bundle, sentence)?;
                let h = self.context_dim;
                context_backward(i, hiddens, ends, grads, &self.attn, mode, &db[..h], &db[2 * h..])?;
                Ok(loss)
            }
        }
    }

    pub fn stepper<'a>(&'a self, params: &'a Params, bundle: &ContextBundle) -> Result<CaptionStepper<'a>> {
        Ok(CaptionStepper {
            model: self,
            params,
            ctx: self.context_input(params, bundle)?,
        })
    }

    pub fn beam_decode(&self, params: &Params, bundle: &ContextBundle, beam: usize, max_len: usize) -> Result<DecodedCaption> {
        beam_search(&self.stepper(params, bundle)?, beam, max_len)
    }

    pub fn greedy(&self, params: &Params, bundle: &ContextBundle, max_len: usize) -> Result<DecodedCaption> {
        greedy_decode(&self.stepper(params, bundle)?, max_len)
    }
}

/// A caption model bound to fixed parameters and one event's context.
pub struct CaptionStepper<'a> {
    model: &'a CaptionModel,
    params: &'a Params,
    ctx: Vec<f64>,
}

impl StepModel for CaptionStepper<'_> {
    type State = LstmState;

    fn start(&self) -> Result<(LstmState, Vec<f64>)> {
        let (state, _) = self.model.prime(self.params, &self.ctx)?;
        self.advance(&state, SOS)
    }

    fn advance(&self, state: &LstmState, token: usize) -> Result<(LstmState, Vec<f64>)> {
        let x = self.model.word_input(self.params, token, &self.ctx)?;
        let (next, _) = self.model.lstm.step(self.params, &x, state)?;
        let lp = log_softmax(&self.model.logits(self.params, next.top()));
        Ok((next, lp))
    }
}
