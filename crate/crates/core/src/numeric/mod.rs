//! Dense matrices and a differentiable-once reverse-mode record.

mod graph;
mod matrix;
mod meta;

pub use graph::{Graph, Var};
pub use matrix::{argmax, logsumexp, sigmoid, softmax, Matrix};
pub use meta::{meta_gradient, MetaGradient};
