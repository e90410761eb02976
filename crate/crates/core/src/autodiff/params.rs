use alloc::string::String;
use alloc::vec::Vec;

use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::bail;
use crate::Result;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of model tensors.
///
/// Trainable weights have `requires_grad` set; non-trainable buffers such as
/// batch-norm running statistics live here too so they are checkpointed.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.entries.push((name.into(), tensor));
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|(n, _)| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|(_, t)| t.requires_grad()).map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    /// Adds the leaf gradients of every parameter bound into `g`.
    pub fn accumulate_grads(&mut self, g: &Graph) {
        for (id, v) in g.bindings() {
            if let Some(grad) = g.grad(v) {
                self.entries[id.0].1.accumulate_grad(grad);
            }
        }
    }

    /// Folds batch statistics recorded by training-mode batch norms into the
    /// running estimates: `running = (1 - momentum)·running + momentum·batch`.
    pub fn apply_stat_updates(&mut self, g: &Graph, momentum: f64) {
        for u in g.stat_updates() {
            for (id, batch) in [(u.mean_param, &u.batch_mean), (u.var_param, &u.batch_var)] {
                let t = self.entries[id.0].1.data_mut();
                t.iter_mut().zip(batch).for_each(|(r, b)| *r = (1.0 - momentum) * *r + momentum * b);
            }
        }
    }

    /// Overwrites values by name; every stored tensor must be provided with
    /// a matching shape.
    pub fn load(&mut self, records: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        for (name, t) in self.entries.iter_mut() {
            let Some((_, shape, data)) = records.iter().find(|(n, _, _)| n == name) else {
                bail!(Data, "checkpoint is missing parameter `{}`", name);
            };
            if shape.as_slice() != t.shape() {
                bail!(Dimension, "parameter `{}` has shape {:?} in checkpoint, model expects {:?}", name, shape, t.shape());
            }
            t.data_mut().copy_from_slice(data);
        }
        Ok(())
    }
}
