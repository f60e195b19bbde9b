//! SGD with classical momentum: `v ← μv − η∇θ`, `θ ← θ + v`.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OptimizerState {
    ids: Vec<ParamId>,
    velocity: Vec<Tensor>,
    learning_rate: f64,
    momentum: f64,
}

impl OptimizerState {
    /// Optimizer over the parameters `ids` of `store`, velocities at zero.
    pub fn new(store: &ParamStore, ids: Vec<ParamId>, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        let velocity = ids.iter().map(|&id| Tensor::zeros(store.value(id).dims())).collect();
        Ok(OptimizerState {
            ids,
            velocity,
            learning_rate,
            momentum,
        })
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) -> Result<()> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        self.learning_rate = learning_rate;
        Ok(())
    }

    pub fn set_velocity(&mut self, index: usize, value: Tensor) -> Result<()> {
        if !value.same_dims(&self.velocity[index]) {
            return Err(Error::shape("optimizer velocity", format!("dims {:?}", value.dims())));
        }
        self.velocity[index] = value;
        Ok(())
    }
}

/// One update over the optimizer's parameters; their gradients are zeroed
/// afterwards. Nothing is modified if any gradient is non-finite.
pub fn sgd_momentum_step(store: &mut ParamStore, state: &mut OptimizerState) -> Result<()> {
    for &id in &state.ids {
        if !store.grad(id).is_finite() {
            return Err(Error::Numeric {
                name: store.name(id).to_string(),
                detail: "non-finite gradient".into(),
            });
        }
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for (k, &id) in state.ids.iter().enumerate() {
        let v = state.velocity[k].values_mut();
        let g = store.grads().get(id).values();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = mu * *vi - lr * gi;
        }
        let theta = store.params_mut().get_mut(id).values_mut();
        for (t, vi) in theta.iter_mut().zip(v.iter()) {
            *t += vi;
        }
    }
    store.grads_mut().zero_ids(&state.ids);
    Ok(())
}
