//! LSTM cells and stacks with explicit backward passes.
//!
//! Gate pre-activations are stacked as `[i; f; o; g]`, each `hidden` rows:
//! `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.

use super::params::{Grads, ParamId, ParamStore, Params};
use super::tensor::{add_assign, matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LstmLayer {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        init_std: f64,
    ) -> Result<Self> {
        Ok(LstmLayer {
            w_x: store.register_gaussian(&format!("{prefix}.w_x"), &[4 * hidden, input], init_std)?,
            w_h: store.register_gaussian(&format!("{prefix}.w_h"), &[4 * hidden, hidden], init_std)?,
            bias: store.register_gaussian(&format!("{prefix}.bias"), &[4 * hidden], init_std)?,
            input,
            hidden,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.w_x, self.w_h, self.bias]
    }
}

/// Values saved by a forward cell step for its backward pass.
#[derive(Clone, Debug)]
pub struct CellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i; f; o; g]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// One LSTM cell step.
pub fn lstm_cell(
    params: &Params,
    layer: &LstmLayer,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<CellCache> {
    let hs = layer.hidden;
    if x.len() != layer.input {
        return Err(Error::shape(
            "lstm_step",
            format!("layer expects input {} but x has length {}", layer.input, x.len()),
        ));
    }
    if h.len() != hs || c.len() != hs {
        return Err(Error::shape(
            "lstm_step",
            format!("hidden size {hs} but h has {} and c has {}", h.len(), c.len()),
        ));
    }
    let mut z = params.get(layer.bias).values().to_vec();
    let mut tmp = vec![0.0; 4 * hs];
    matvec(params.get(layer.w_x).values(), 4 * hs, layer.input, x, &mut tmp);
    add_assign(&mut z, &tmp);
    matvec(params.get(layer.w_h).values(), 4 * hs, hs, h, &mut tmp);
    add_assign(&mut z, &tmp);

    let mut gates = z;
    for (k, v) in gates.iter_mut().enumerate() {
        *v = if k < 3 * hs { sigmoid(*v) } else { v.tanh() };
    }
    let mut c_new = vec![0.0; hs];
    let mut tanh_c = vec![0.0; hs];
    let mut h_new = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, o, g) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
        c_new[j] = f * c[j] + i * g;
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = o * tanh_c[j];
    }
    Ok(CellCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        gates,
        tanh_c,
        h: h_new,
        c: c_new,
    })
}

/// Backward through one cell step given `dh'`, `dc'`.
/// Accumulates weight gradients and returns `(dx, dh, dc)`.
pub fn lstm_cell_backward(
    params: &Params,
    grads: &mut Grads,
    layer: &LstmLayer,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = layer.hidden;
    let g = &cache.gates;
    let mut dz = vec![0.0; 4 * hs];
    let mut dc_prev = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, o, gg) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
        let tc = cache.tanh_c[j];
        let d_o = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        let d_i = dct * gg;
        let d_g = dct * i;
        let d_f = dct * cache.c_prev[j];
        dc_prev[j] = dct * f;
        dz[j] = d_i * i * (1.0 - i);
        dz[hs + j] = d_f * f * (1.0 - f);
        dz[2 * hs + j] = d_o * o * (1.0 - o);
        dz[3 * hs + j] = d_g * (1.0 - gg * gg);
    }
    outer_acc(&dz, &cache.x, grads.get_mut(layer.w_x).values_mut());
    outer_acc(&dz, &cache.h_prev, grads.get_mut(layer.w_h).values_mut());
    add_assign(grads.get_mut(layer.bias).values_mut(), &dz);

    let mut dx = vec![0.0; layer.input];
    matvec_t_acc(params.get(layer.w_x).values(), 4 * hs, layer.input, &dz, &mut dx);
    let mut dh_prev = vec![0.0; hs];
    matvec_t_acc(params.get(layer.w_h).values(), 4 * hs, hs, &dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

/// Per-layer hidden and cell vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn top(&self) -> &[f64] {
        self.h.last().expect("stack has at least one layer")
    }
}

/// Stack of LSTM layers; layer `l + 1` consumes layer `l`'s `h'`.
#[derive(Clone, Debug)]
pub struct Lstm {
    layers: Vec<LstmLayer>,
}

pub type StepCache = Vec<CellCache>;

impl Lstm {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        num_layers: usize,
        init_std: f64,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config("LSTM needs at least one layer".into()));
        }
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmLayer::register(store, &format!("{prefix}.l{l}"), inp, hidden, init_std)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Lstm { layers })
    }

    pub fn from_layers(layers: Vec<LstmLayer>) -> Self {
        Lstm { layers }
    }

    pub fn layers(&self) -> &[LstmLayer] {
        &self.layers
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.param_ids()).collect()
    }

    pub fn zero_state(&self) -> LstmState {
        let n = self.layers.len();
        let hs = self.hidden();
        LstmState {
            h: vec![vec![0.0; hs]; n],
            c: vec![vec![0.0; hs]; n],
        }
    }

    pub fn step(&self, params: &Params, x: &[f64], state: &LstmState) -> Result<(LstmState, StepCache)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut next = LstmState {
            h: Vec::with_capacity(self.layers.len()),
            c: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &next.h[l - 1] };
            let cache = lstm_cell(params, layer, input, &state.h[l], &state.c[l])?;
            next.h.push(cache.h.clone());
            next.c.push(cache.c.clone());
            caches.push(cache);
        }
        Ok((next, caches))
    }

    /// Backward through one stacked step.
    ///
    /// On entry `dh`/`dc` hold the gradient w.r.t. this step's output state
    /// (per layer, with any external top-layer gradient already added); on
    /// return they hold the gradient w.r.t. the previous state. Returns `dx`.
    pub fn step_backward(
        &self,
        params: &Params,
        grads: &mut Grads,
        cache: &StepCache,
        dh: &mut [Vec<f64>],
        dc: &mut [Vec<f64>],
    ) -> Vec<f64> {
        let mut dx_out = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let (dx, dh_prev, dc_prev) =
                lstm_cell_backward(params, grads, &self.layers[l], &cache[l], &dh[l], &dc[l]);
            dh[l] = dh_prev;
            dc[l] = dc_prev;
            if l > 0 {
                add_assign(&mut dh[l - 1], &dx);
            } else {
                dx_out = dx;
            }
        }
        dx_out
    }

    pub fn zero_grad_state(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let s = self.zero_state();
        (s.h, s.c)
    }
}
