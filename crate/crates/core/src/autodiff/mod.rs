//! Dense f64 tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, which is
//! already a topological order, so [`Graph::backward`] is a single reverse
//! sweep that visits each node once. Trainable state lives in a
//! [`ParamStore`] and is bound into a graph as leaf nodes for each forward
//! pass.

mod graph;
mod layers_ops;
mod optim;
mod params;
mod tensor;

pub use graph::{Graph, StatUpdate, Var};
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}
