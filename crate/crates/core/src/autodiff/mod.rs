//! Reverse-mode automatic differentiation over dense `f64` arrays, and Adam.

mod adam;
pub mod ops;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use ops::OpKind;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Evaluate an operation on plain values without recording it.
pub fn forward_op(kind: &OpKind, inputs: &[&Tensor]) -> crate::Result<Tensor> {
    ops::forward(kind, inputs)
}
