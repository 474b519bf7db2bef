//! Dense-tensor reverse-mode automatic differentiation.

pub mod check;
mod params;
mod tape;
mod tensor;

pub use params::{BoundParams, ParamSet};
pub use tape::{Gradients, Tape};
pub use tensor::Tensor;
