//! Minimal reverse-mode differentiation: dense tensors, a fixed kernel set,
//! parameter storage and the ADAM / SGD optimizers.

pub mod check;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{OptimizerKind, OptimizerState};
pub use params::{ParamGrads, ParamId, ParamStore, Parameter};
pub use tape::{EdgeIndex, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
