use indexmap::IndexMap;
use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`], stable for the store's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named learnable tensors with their gradients, iterated in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.entries.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        let (index, _) = self.entries.insert_full(name.to_string(), Param { value, grad });
        Ok(ParamId(index))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).map(|(k, _)| k.as_str()).expect("valid param id")
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn zero_grad(&mut self) {
        self.entries.values_mut().for_each(|p| p.grad.fill(0.0));
    }

    /// A zeroed gradient buffer aligned with this store.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self.entries.values().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// Overwrites every stored gradient with `grads`.
    /// Exchanges the stored gradients with `grads` without copying.
    pub fn swap_grads(&mut self, grads: &mut Gradients) -> Result<()> {
        if grads.tensors.len() != self.entries.len() {
            return Err(Error::invalid("gradient buffer does not match parameter store"));
        }
        for (p, g) in self.entries.values_mut().zip(grads.tensors.iter_mut()) {
            g.expect_shape("swap_grads", p.value.shape())?;
            std::mem::swap(&mut p.grad, g);
        }
        Ok(())
    }

    pub fn set_grads(&mut self, grads: Gradients) -> Result<()> {
        if grads.tensors.len() != self.entries.len() {
            return Err(Error::invalid("gradient buffer does not match parameter store"));
        }
        for (p, g) in self.entries.values_mut().zip(grads.tensors) {
            g.expect_shape("set_grads", p.value.shape())?;
            p.grad = g;
        }
        Ok(())
    }
}

/// Gradient tensors indexed by [`ParamId`], used by workers that must not
/// touch the shared store.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Mutable access to two distinct gradient buffers at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Tensor, &mut Tensor) {
        assert_ne!(a.0, b.0, "pair_mut needs distinct ids");
        if a.0 < b.0 {
            let (lo, hi) = self.tensors.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.tensors.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    /// Resets every buffer to zero in place.
    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) -> Result<()> {
        self.tensors[id.0].add_assign(g)
    }

    /// `self += other`, tensor by tensor in parameter order.
    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(alpha));
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
