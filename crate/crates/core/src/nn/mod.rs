//! Minimal deterministic neural engine: dense, conv2d and conv_transpose2d
//! layers, relu/tanh activations, MSE loss, reverse-mode gradients and Adam.
//!
//! Storage is `f32` throughout the production path; every component is
//! generic over [`Real`] so gradient checks can run the identical code in
//! `f64`, where central differences are meaningful at tight tolerances.

mod adam;
mod init;
pub mod layer;
mod linalg;
mod loss;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use init::{fill_params, InitScheme};
pub use layer::{Activation, LayerSpec};
pub use linalg::{matmul, matmul_acc, transpose};
pub use loss::{mse_loss, mse_value};
pub use network::{Gradients, Network};
pub use tensor::{Real, Tensor};
