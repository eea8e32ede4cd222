//! Mean-squared-error loss with its gradient seed.

use super::tensor::{Real, Tensor};
use crate::error::{CoreError, Result};

/// Mean over all entries of the squared difference, accumulated in f64,
/// plus the gradient seed 2·(pred − target)/n for the backward pass.
pub fn mse_loss<S: Real>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(f64, Tensor<S>)> {
    if pred.shape() != target.shape() {
        return Err(CoreError::Shape(format!(
            "mse_loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel();
    if n == 0 {
        return Err(CoreError::Shape("mse_loss: empty tensors".into()));
    }
    let mut acc = 0.0f64;
    let mut grad = vec![S::zero(); n];
    let scale = S::of_f64(2.0 / n as f64);
    for ((g, &p), &t) in grad.iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        acc += d.as_f64() * d.as_f64();
        *g = d * scale;
    }
    let loss = acc / n as f64;
    if !loss.is_finite() {
        return Err(CoreError::Numeric(format!("mse_loss produced {loss}")));
    }
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}

/// MSE without the gradient, for evaluation loops.
pub fn mse_value<S: Real>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(CoreError::Shape(format!(
            "mse_value: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel();
    let mut acc = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.as_f64() - t.as_f64();
        acc += d * d;
    }
    Ok(acc / n as f64)
}
