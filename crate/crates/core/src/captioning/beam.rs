//! Length-capped beam search over any next-token distribution.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::EOS;
use crate::error::{Error, Result};

/// Autoregressive model as seen by the decoder. Log-probabilities are over
/// the whole vocabulary, `EOS` included.
pub trait StepModel {
    type State: Clone;

    /// State after the start token and the log-probabilities of the first word.
    fn start(&self) -> Result<(Self::State, Vec<f64>)>;

    /// Feed `token` and return the next state and next-word log-probabilities.
    fn advance(&self, state: &Self::State, token: usize) -> Result<(Self::State, Vec<f64>)>;
}

/// Decoded word indices (EOS excluded) and the total log-probability,
/// which counts the EOS step when `finished`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedCaption {
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub finished: bool,
}

#[derive(Clone)]
struct Hyp<S> {
    tokens: Vec<usize>,
    logprob: f64,
    finished: bool,
    state: Option<S>,
    next: Vec<f64>,
}

impl<S> Hyp<S> {
    fn key(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens.iter().copied().chain(self.finished.then_some(EOS))
    }
}

fn beam_order<S>(a: &Hyp<S>, b: &Hyp<S>) -> Ordering {
    b.logprob.total_cmp(&a.logprob).then_with(|| a.key().cmp(b.key()))
}

fn final_order<S>(a: &Hyp<S>, b: &Hyp<S>) -> Ordering {
    b.logprob
        .total_cmp(&a.logprob)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search keeping the `beam` best partial hypotheses by total
/// log-probability. Finished hypotheses stay in the beam; decoding stops
/// once all are finished or `max_len` words have been emitted. The answer
/// is the highest-scoring surviving hypothesis, finished or length-capped,
/// or the greedy sequence if that scores higher; ties go to the shorter,
/// then lexicographically smaller, sequence.
pub fn beam_search<M: StepModel>(model: &M, beam: usize, max_len: usize) -> Result<DecodedCaption> {
    if beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let (state, next) = model.start()?;
    let mut hyps = vec![Hyp {
        tokens: Vec::new(),
        logprob: 0.0,
        finished: false,
        state: Some(state),
        next,
    }];
    for _ in 0..max_len {
        if hyps.iter().all(|h| h.finished) {
            break;
        }
        let mut cands: Vec<(usize, Option<usize>, Hyp<M::State>)> = Vec::new();
        for (hi, h) in hyps.iter().enumerate() {
            if h.finished {
                cands.push((hi, None, h.clone()));
                continue;
            }
            for (v, &lp) in h.next.iter().enumerate() {
                let finished = v == EOS;
                let mut tokens = h.tokens.clone();
                if !finished {
                    tokens.push(v);
                }
                cands.push((
                    hi,
                    Some(v),
                    Hyp {
                        tokens,
                        logprob: h.logprob + lp,
                        finished,
                        state: None,
                        next: Vec::new(),
                    },
                ));
            }
        }
        cands.sort_by(|a, b| beam_order(&a.2, &b.2));
        cands.truncate(beam);
        let mut next_hyps = Vec::with_capacity(cands.len());
        for (parent, token, mut h) in cands {
            if let (Some(v), false) = (token, h.finished) {
                if h.tokens.len() < max_len {
                    let st = hyps[parent].state.as_ref().expect("live hypothesis keeps its state");
                    let (s, n) = model.advance(st, v)?;
                    h.state = Some(s);
                    h.next = n;
                }
            }
            next_hyps.push(h);
        }
        hyps = next_hyps;
    }
    let best = hyps
        .iter()
        .min_by(|a, b| final_order(a, b))
        .expect("beam is never empty");
    let found = DecodedCaption {
        tokens: best.tokens.clone(),
        logprob: best.logprob,
        finished: best.finished,
    };
    // pruning can drop the greedy path; keep it as a fallback candidate
    let greedy = greedy_decode(model, max_len)?;
    let pick_greedy = match greedy.logprob.total_cmp(&found.logprob) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (greedy.tokens.len(), &greedy.tokens) < (found.tokens.len(), &found.tokens),
    };
    Ok(if pick_greedy { greedy } else { found })
}

/// Argmax decoding; ties go to the lower token index.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<DecodedCaption> {
    let (mut state, mut next) = model.start()?;
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    while tokens.len() < max_len {
        let (v, lp) = next
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best });
        logprob += lp;
        if v == EOS {
            return Ok(DecodedCaption {
                tokens,
                logprob,
                finished: true,
            });
        }
        tokens.push(v);
        if tokens.len() < max_len {
            (state, next) = model.advance(&state, v)?;
        }
    }
    Ok(DecodedCaption {
        tokens,
        logprob,
        finished: false,
    })
}
