//! An ordered layer stack with forward caching and reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::init::{fill_params, InitScheme};
use super::layer::{Layer, LayerCache, LayerSpec};
use super::tensor::{Real, Tensor};
use crate::error::{CoreError, Result};

pub struct Network<S: Real = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<S>>,
    cache: Option<Vec<LayerCache<S>>>,
}

/// Gradients of the loss w.r.t. every parameter tensor plus the network input.
#[derive(Debug)]
pub struct Gradients<S: Real> {
    /// (weights grad, bias grad) per layer; empty tensors for layers without
    /// parameters, aligned with the layer order.
    pub per_layer: Vec<(Tensor<S>, Tensor<S>)>,
    pub input: Tensor<S>,
}

impl<S: Real> Network<S> {
    /// Builds and initializes a network. Same (specs, seed, scheme) always
    /// produces bit-identical parameters.
    pub fn new(
        input_shape: &[usize],
        specs: &[LayerSpec],
        scheme: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (idx, spec) in specs.iter().enumerate() {
            // dense flattens trailing dims; conv kinds promote (C,) to (C,1,1)
            let in_shape = match spec {
                LayerSpec::Dense { .. } => vec![shape.iter().product()],
                LayerSpec::Conv2d { .. } | LayerSpec::ConvTranspose2d { .. } if shape.len() == 1 => {
                    vec![shape[0], 1, 1]
                }
                _ => shape.clone(),
            };
            let out_shape = spec.out_shape(idx, &in_shape)?;
            let (w_len, b_len, fan_in) = spec.param_sizes(&in_shape);
            let mut weights = vec![S::zero(); w_len];
            let mut bias = vec![S::zero(); b_len];
            fill_params(scheme, fan_in, &mut rng, &mut weights);
            fill_params(scheme, fan_in, &mut rng, &mut bias);
            layers.push(Layer {
                spec: *spec,
                in_shape,
                out_shape: out_shape.clone(),
                weights: Tensor::from_vec(&[w_len], weights)?,
                bias: Tensor::from_vec(&[b_len], bias)?,
            });
            shape = out_shape;
        }
        Ok(Network { input_shape: input_shape.to_vec(), layers, cache: None })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map(|l| l.out_shape.as_slice()).unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<usize> {
        let shape = input.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(CoreError::Config(format!(
                "network expects batched input (B, {:?}), got {:?}",
                self.input_shape,
                shape
            )));
        }
        Ok(shape[0])
    }

    /// Forward pass that records intermediate state for `backward`.
    pub fn forward(&mut self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = reshape_for(&self.layers, 0, input.clone())?;
        for (idx, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer.forward(&cur, true);
            caches.push(cache);
            cur = if idx + 1 < self.layers.len() {
                reshape_for(&self.layers, idx + 1, out)?
            } else {
                out
            };
        }
        self.cache = Some(caches);
        Ok(cur)
    }

    /// Forward pass without caching; usable on a shared reference.
    pub fn infer(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(input)?;
        let mut cur = reshape_for(&self.layers, 0, input.clone())?;
        for (idx, layer) in self.layers.iter().enumerate() {
            let (out, _) = layer.forward(&cur, false);
            cur = if idx + 1 < self.layers.len() {
                reshape_for(&self.layers, idx + 1, out)?
            } else {
                out
            };
        }
        Ok(cur)
    }

    /// Reverse-mode gradients of a scalar loss, given d(loss)/d(output).
    /// Consumes the cache recorded by the last `forward`.
    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Gradients<S>> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| CoreError::State("backward called before forward".into()))?;
        let batch = grad_out.shape()[0];
        let mut per_layer = vec![(Tensor::zeros(&[0]), Tensor::zeros(&[0])); self.layers.len()];
        let mut grad = grad_out.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let mut out_batch_shape = vec![batch];
            out_batch_shape.extend_from_slice(&layer.out_shape);
            let grad_shaped = grad.reshape(&out_batch_shape)?;
            let grads = layer.backward(&grad_shaped, &caches[idx])?;
            per_layer[idx] = (grads.weights, grads.bias);
            grad = grads.input;
        }
        let mut in_batch_shape = vec![batch];
        in_batch_shape.extend_from_slice(&self.input_shape);
        Ok(Gradients { per_layer, input: grad.reshape(&in_batch_shape)? })
    }

    /// Flat views of every parameter tensor, layer order, weights then bias.
    pub fn param_slices(&self) -> Vec<&[S]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if layer.spec.has_params() {
                out.push(layer.weights.data());
                out.push(layer.bias.data());
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if layer.spec.has_params() {
                out.push(layer.weights.data_mut());
                out.push(layer.bias.data_mut());
            }
        }
        out
    }

    /// Names aligned with `param_slices`, e.g. "layer2.weights".
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.spec.has_params() {
                out.push(format!("layer{idx}.weights"));
                out.push(format!("layer{idx}.bias"));
            }
        }
        out
    }

    /// Gradient slices aligned with `param_slices`.
    pub fn grad_slices<'a>(&self, grads: &'a Gradients<S>) -> Vec<&'a [S]> {
        let mut out = Vec::new();
        for (layer, (gw, gb)) in self.layers.iter().zip(&grads.per_layer) {
            if layer.spec.has_params() {
                out.push(gw.data());
                out.push(gb.data());
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Copies all parameters out as (name, shape, data) triples for storage.
    pub fn export_params(&self) -> Vec<(String, Vec<usize>, Vec<S>)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.spec.has_params() {
                out.push((
                    format!("layer{idx}.weights"),
                    layer.weights.shape().to_vec(),
                    layer.weights.data().to_vec(),
                ));
                out.push((
                    format!("layer{idx}.bias"),
                    layer.bias.shape().to_vec(),
                    layer.bias.data().to_vec(),
                ));
            }
        }
        out
    }

    /// Restores parameters exported by `export_params`.
    pub fn import_params(&mut self, params: &[(String, Vec<usize>, Vec<S>)]) -> Result<()> {
        let mut by_name: std::collections::HashMap<&str, &(String, Vec<usize>, Vec<S>)> =
            std::collections::HashMap::new();
        for p in params {
            by_name.insert(p.0.as_str(), p);
        }
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            if !layer.spec.has_params() {
                continue;
            }
            for (field, tensor) in
                [("weights", &mut layer.weights), ("bias", &mut layer.bias)]
            {
                let name = format!("layer{idx}.{field}");
                let entry = by_name.get(name.as_str()).ok_or_else(|| {
                    CoreError::Data(format!("missing parameter entry {name}"))
                })?;
                if entry.2.len() != tensor.numel() {
                    return Err(CoreError::Shape(format!(
                        "parameter {name}: expected {} values, file has {}",
                        tensor.numel(),
                        entry.2.len()
                    )));
                }
                tensor.data_mut().copy_from_slice(&entry.2);
            }
        }
        Ok(())
    }
}

/// Adapts a batched tensor to the declared per-example input shape of layer
/// `idx` (flatten for dense, (C,) -> (C,1,1) for conv kinds).
fn reshape_for<S: Real>(layers: &[Layer<S>], idx: usize, t: Tensor<S>) -> Result<Tensor<S>> {
    let batch = t.shape()[0];
    let mut shape = vec![batch];
    shape.extend_from_slice(&layers[idx].in_shape);
    t.reshape(&shape)
}
