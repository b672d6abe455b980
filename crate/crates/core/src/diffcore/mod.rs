//! Dense 2-D tensors with tape-based reverse-mode differentiation.

mod adam;
pub mod check;
mod tape;
mod tensor;

pub use adam::Adam;
pub use tape::{logistic, DiffError, Gradients, Tape, Var};
pub use tensor::{squared_distance, Tensor};
