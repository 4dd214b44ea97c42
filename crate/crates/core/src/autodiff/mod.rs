//! Dense tensors and tape-based reverse-mode differentiation.
//!
//! Values are `f64` throughout. A [`Tape`] owns every intermediate of one
//! forward pass; parameters live outside the tape and are registered as leaves
//! each step.

pub mod checkpoint;
mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
