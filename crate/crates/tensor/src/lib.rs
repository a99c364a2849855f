//! Minimal dense tensor engine with reverse-mode automatic differentiation.
//!
//! Values are 64-bit floats in rank-2 row-major tensors. A [`Tape`] records
//! one forward pass; [`Tape::backward`] returns gradients for every
//! [`Tape::param`] leaf. Segment operations treat rows sharing an id as one
//! neighbourhood, which is what graph attention needs.

mod error;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use error::TensorError;
pub use optim::{adam_step, AdamConfig, AdamState};
pub use rng::SplitMix64;
pub use tape::{sigmoid, Gradients, Indices, Tape, Var};
pub use tensor::Tensor;
