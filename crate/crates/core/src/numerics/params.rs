use std::collections::HashMap;

use super::rng::SeededRng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameter values, indexed by [`ParamId`].
#[derive(Clone, Debug, Default)]
pub struct Params {
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }
}

/// Gradient buffers, one per parameter with identical dims.
#[derive(Clone, Debug, Default)]
pub struct Grads {
    tensors: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(params: &Params) -> Self {
        Grads {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(t.dims())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn zero_ids(&mut self, ids: &[ParamId]) {
        for id in ids {
            self.tensors[id.0].fill(0.0);
        }
    }
}

/// Named parameter tensors with paired gradient buffers.
///
/// Registration order is significant: initial values are drawn from a single
/// seeded stream in that order, so two stores built by the same sequence of
/// `register_*` calls with the same seed are bit-identical.
#[derive(Clone, Debug)]
pub struct ParamStore {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
    params: Params,
    grads: Grads,
    rng_seed: u64,
    rng: SeededRng,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        ParamStore {
            names: Vec::new(),
            index: HashMap::new(),
            params: Params::default(),
            grads: Grads::default(),
            rng_seed,
            rng: SeededRng::new(rng_seed),
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Register a tensor drawn from `N(0, std²)`.
    pub fn register_gaussian(&mut self, name: &str, dims: &[usize], std: f64) -> Result<ParamId> {
        let len: usize = dims.iter().product();
        let values = (0..len).map(|_| std * self.rng.gaussian()).collect();
        self.register(name, Tensor::new(dims.to_vec(), values)?)
    }

    pub fn register_zeros(&mut self, name: &str, dims: &[usize]) -> Result<ParamId> {
        self.register(name, Tensor::zeros(dims))
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.grads.tensors.push(Tensor::zeros(value.dims()));
        self.params.tensors.push(value);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    /// Ids whose names start with `prefix`.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.ids()
            .filter(|id| self.names[id.0].starts_with(prefix))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn grads(&self) -> &Grads {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Grads {
        &mut self.grads
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        self.params.get(id)
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        self.grads.get(id)
    }

    /// Borrow values immutably and gradients mutably at the same time.
    pub fn split_mut(&mut self) -> (&Params, &mut Grads) {
        (&self.params, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.zero();
    }

    /// Replace a tensor's values, keeping dims.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if !value.same_dims(self.params.get(id)) {
            return Err(Error::shape(
                "set_value",
                format!(
                    "{}: expected {:?}, got {:?}",
                    self.names[id.0],
                    self.params.get(id).dims(),
                    value.dims()
                ),
            ));
        }
        *self.params.get_mut(id) = value;
        Ok(())
    }
}
