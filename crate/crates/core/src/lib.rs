pub mod autograd;
pub mod checkpoint;
pub mod clip;
pub mod config;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod prompt;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use autograd::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
