//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::tensor::Real;
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment accumulators for one parameter group.
pub struct AdamState<S: Real> {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    names: Vec<String>,
}

impl<S: Real> AdamState<S> {
    pub fn new(cfg: AdamConfig, sizes: &[usize], names: Vec<String>) -> Self {
        assert_eq!(sizes.len(), names.len(), "one name per parameter tensor");
        AdamState {
            cfg,
            step: 0,
            m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            names,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning-rate override for schedules; moments are kept.
    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update over aligned parameter and gradient slices.
    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[&[S]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::Shape(format!(
                "adam: state holds {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let b1 = S::of_f64(self.cfg.beta1);
        let b2 = S::of_f64(self.cfg.beta2);
        let one = S::one();
        let corr1 = S::of_f64(1.0 - self.cfg.beta1.powi(self.step as i32));
        let corr2 = S::of_f64(1.0 - self.cfg.beta2.powi(self.step as i32));
        let lr = S::of_f64(self.cfg.lr);
        let eps = S::of_f64(self.cfg.epsilon);
        for (idx, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(CoreError::Shape(format!(
                    "adam: parameter {} size mismatch",
                    self.names[idx]
                )));
            }
            for ((pv, &gv), (mv, vv)) in p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
                if !gv.is_finite() {
                    return Err(CoreError::Numeric(format!(
                        "non-finite gradient in {}",
                        self.names[idx]
                    )));
                }
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut state = AdamState::<f32>::new(
            AdamConfig::default(),
            &[3],
            vec!["p".into()],
        );
        let mut p = vec![1.0f32, -2.0, 0.5];
        let orig = p.clone();
        let g = vec![0.0f32; 3];
        for _ in 0..5 {
            state.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // g=1: m̂ = v̂ = 1, so the update is exactly -lr/(1+eps)
        let mut state = AdamState::<f64>::new(
            AdamConfig { lr: 0.001, ..Default::default() },
            &[1],
            vec!["w".into()],
        );
        let mut p = vec![0.0f64];
        state.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-9, "got {}", p[0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut state = AdamState::<f32>::new(
            AdamConfig::default(),
            &[2, 2],
            vec!["layer0.weights".into(), "layer0.bias".into()],
        );
        let (mut a, mut b) = (vec![0.0f32; 2], vec![0.0f32; 2]);
        let err = state
            .step(&mut [&mut a, &mut b], &[&[0.0, 0.0], &[f32::NAN, 0.0]])
            .unwrap_err();
        assert!(err.to_string().contains("layer0.bias"), "{err}");
    }
}
