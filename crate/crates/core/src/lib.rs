//! Tuned VGG-16 networks for seven-way cooking-object-state classification,
//! with every piece needed to train and evaluate them on a CPU.

pub mod error;
pub mod harness;
pub mod imgpipe;
pub mod layers;
pub mod modelzoo;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
