//! Deterministic parameter initialization.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Every weight and bias i.i.d. N(0, 1). Used for frozen task networks.
    GaussianUnit,
    /// Weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Used for
    /// trainable models.
    FanInUniform,
}

/// Fills one parameter buffer from the given stream.
pub fn fill_params<S: Real>(scheme: InitScheme, fan_in: usize, rng: &mut ChaCha8Rng, out: &mut [S]) {
    match scheme {
        InitScheme::GaussianUnit => {
            for v in out.iter_mut() {
                *v = S::sample_normal(rng);
            }
        }
        InitScheme::FanInUniform => {
            let bound = S::of_f64(1.0 / (fan_in.max(1) as f64).sqrt());
            let two = S::of_f64(2.0);
            for v in out.iter_mut() {
                *v = (S::sample_unit(rng) * two - S::one()) * bound;
            }
        }
    }
}
