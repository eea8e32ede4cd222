//! Core library: synthetic factor-labeled image data, random-network
//! regression tasks, a small deterministic neural engine, the model zoo
//! built on it, and supervised disentanglement metrics over the learned
//! latent representations.

pub mod error;
pub mod nn;
pub mod seed;

pub use error::{CoreError, Result};
