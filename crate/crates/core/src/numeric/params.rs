use rand::Rng;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
struct Param {
    name: String,
    value: Tensor2,
    grad: Tensor2,
    first_moment: Tensor2,
    second_moment: Tensor2,
}

/// Named parameters with matching gradient and optimizer-moment buffers.
///
/// Insertion order is preserved; checkpoints and gradient checks iterate in
/// that order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    optimizer_steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> Result<ParamId> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let (r, c) = value.shape();
        self.params.push(Param {
            name,
            grad: Tensor2::zeros(r, c),
            first_moment: Tensor2::zeros(r, c),
            second_moment: Tensor2::zeros(r, c),
            value,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].grad
    }

    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        self.id(name).map(|id| self.value_mut(id))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.optimizer_steps
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds `grads` into the stored gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        if grads.per_param.len() != self.params.len() {
            return Err(Error::dim(
                "gradient set",
                self.params.len(),
                grads.per_param.len(),
            ));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.per_param) {
            if let Some(g) = g {
                for (dst, src) in p.grad.data_mut().iter_mut().zip(g) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g *= factor;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Copies values of every parameter present in both stores, checking shapes.
    pub fn load_values(&mut self, source: impl Fn(&str) -> Option<Tensor2>) -> Result<()> {
        for p in &mut self.params {
            let t = source(&p.name).ok_or_else(|| {
                Error::Checkpoint(format!("missing parameter `{}`", p.name))
            })?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t;
        }
        Ok(())
    }

    pub(crate) fn optimizer_parts(&mut self) -> (&mut u64, impl Iterator<Item = ParamSlot<'_>>) {
        let steps = &mut self.optimizer_steps;
        let iter = self.params.iter_mut().map(|p| ParamSlot {
            value: p.value.data_mut(),
            grad: p.grad.data(),
            first_moment: p.first_moment.data_mut(),
            second_moment: p.second_moment.data_mut(),
        });
        (steps, iter)
    }
}

pub(crate) struct ParamSlot<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
    pub first_moment: &'a mut [f64],
    pub second_moment: &'a mut [f64],
}

/// Gradients of one scalar loss, indexed by [`ParamId`]. Parameters the loss
/// does not touch hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) per_param: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub(crate) fn empty(n: usize) -> Self {
        Gradients {
            per_param: vec![None; n],
        }
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        self.per_param[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Gradient for `id`, zeros if untouched.
    pub fn get(&self, id: ParamId, store: &ParamStore) -> Vec<f64> {
        self.per_param[id.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; store.value(id).len()])
    }

    pub fn entry(&self, id: ParamId, index: usize) -> f64 {
        self.per_param[id.0].as_ref().map_or(0.0, |g| g[index])
    }
}

/// Seeded parameter construction with Glorot-uniform weights and zero biases.
pub struct ParamInit<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
}

impl<'a, R: Rng> ParamInit<'a, R> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut R) -> Self {
        ParamInit { store, rng }
    }

    /// `out x in` weight matrix, uniform in `+-sqrt(6 / (in + out))`.
    pub fn weight(&mut self, name: &str, out_dim: usize, in_dim: usize) -> Result<ParamId> {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..out_dim * in_dim)
            .map(|_| self.rng.random_range(-limit..=limit))
            .collect();
        self.store.add(name, Tensor2::from_vec(out_dim, in_dim, data)?)
    }

    pub fn bias(&mut self, name: &str, dim: usize) -> Result<ParamId> {
        self.store.add(name, Tensor2::column(vec![0.0; dim])?)
    }
}
