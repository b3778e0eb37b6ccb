//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! Every value is a 2-D [`Tensor`] (scalars are `1×1`). Operations are
//! recorded eagerly on a [`Tape`]; [`Tape::backward`] walks the records in
//! reverse creation order, which is a valid reverse topological order
//! because a node can only refer to nodes created before it.

mod check;
mod optim;
mod suite;
mod tape;
mod tensor;

pub use check::{finite_difference_check, finite_difference_report, FdReport};
pub use optim::{Adam, AdamConfig};
pub use suite::primitive_gradient_suite;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod primitive_tests;
