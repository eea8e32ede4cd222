//! Layer kinds, their parameter layouts and forward/backward rules.
//!
//! Both convolution kinds are lowered to a patch-matrix product (im2col) so
//! the whole engine leans on one matmul kernel. Layouts:
//!
//! * dense:            weights (in, out), bias (out)
//! * conv2d:           weights (out_c, in_c·k·k), bias (out_c)
//! * conv_transpose2d: weights (in_c, out_c·k·k), bias (out_c)
//!
//! Dense accepts any input rank and flattens per example. The convolution
//! kinds accept a (B, C) input as (B, C, 1, 1), which is how a latent vector
//! enters a transposed-convolution decoder.

use serde::{Deserialize, Serialize};

use super::linalg::{matmul, transpose};
use super::tensor::{Real, Tensor};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { out_features: usize },
    Conv2d { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    ConvTranspose2d { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Activation { act: Activation },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::ConvTranspose2d { .. } => "conv_transpose2d",
            LayerSpec::Activation { .. } => "activation",
        }
    }

    pub fn has_params(&self) -> bool {
        !matches!(self, LayerSpec::Activation { .. })
    }

    /// Validates geometry and returns the per-example output shape.
    pub fn out_shape(&self, layer_idx: usize, in_shape: &[usize]) -> Result<Vec<usize>> {
        let cfg_err = |msg: String| {
            CoreError::Config(format!("layer {layer_idx} ({}): {msg}", self.kind_name()))
        };
        match *self {
            LayerSpec::Dense { out_features } => {
                if out_features == 0 {
                    return Err(cfg_err("out_features must be positive".into()));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
                let (_, h, w) = as_chw(in_shape)
                    .ok_or_else(|| cfg_err(format!("expects (C,H,W) input, got {in_shape:?}")))?;
                check_geometry(kernel, stride, out_channels).map_err(&cfg_err)?;
                let oh = conv_out(h, kernel, stride, padding)
                    .ok_or_else(|| cfg_err(format!(
                        "input {h}x{w} with kernel {kernel} stride {stride} padding {padding} \
                         does not yield a positive integral output size"
                    )))?;
                let ow = conv_out(w, kernel, stride, padding).ok_or_else(|| {
                    cfg_err(format!("width {w} incompatible with kernel/stride/padding"))
                })?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::ConvTranspose2d { out_channels, kernel, stride, padding } => {
                let (_, h, w) = as_chw(in_shape)
                    .ok_or_else(|| cfg_err(format!("expects (C,H,W) input, got {in_shape:?}")))?;
                check_geometry(kernel, stride, out_channels).map_err(&cfg_err)?;
                let oh = convt_out(h, kernel, stride, padding).ok_or_else(|| {
                    cfg_err(format!(
                        "input {h}x{w} with kernel {kernel} stride {stride} padding {padding} \
                         collapses to a non-positive output size"
                    ))
                })?;
                let ow = convt_out(w, kernel, stride, padding)
                    .ok_or_else(|| cfg_err(format!("width {w} collapses to non-positive size")))?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::Activation { .. } => Ok(in_shape.to_vec()),
        }
    }

    /// (weight_len, bias_len, fan_in) for parameter allocation.
    pub fn param_sizes(&self, in_shape: &[usize]) -> (usize, usize, usize) {
        match *self {
            LayerSpec::Dense { out_features } => {
                let fan_in: usize = in_shape.iter().product();
                (fan_in * out_features, out_features, fan_in)
            }
            LayerSpec::Conv2d { out_channels, kernel, .. } => {
                let c = as_chw(in_shape).map(|(c, _, _)| c).unwrap_or(0);
                let fan_in = c * kernel * kernel;
                (out_channels * fan_in, out_channels, fan_in)
            }
            LayerSpec::ConvTranspose2d { out_channels, kernel, .. } => {
                let c = as_chw(in_shape).map(|(c, _, _)| c).unwrap_or(0);
                (c * out_channels * kernel * kernel, out_channels, c * kernel * kernel)
            }
            LayerSpec::Activation { .. } => (0, 0, 0),
        }
    }
}

/// Interprets a per-example shape as (C, H, W); (C,) means (C, 1, 1).
pub fn as_chw(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match shape.len() {
        1 => Some((shape[0], 1, 1)),
        3 => Some((shape[0], shape[1], shape[2])),
        _ => None,
    }
}

fn check_geometry(kernel: usize, stride: usize, out: usize) -> std::result::Result<(), String> {
    if kernel < 1 || stride < 1 {
        return Err("kernel and stride must be >= 1".into());
    }
    if out == 0 {
        return Err("out_channels must be positive".into());
    }
    Ok(())
}

/// Conv output size: (h + 2p - k)/s + 1, required to divide exactly.
fn conv_out(h: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let span = (h + 2 * p).checked_sub(k)?;
    if span % s != 0 {
        return None;
    }
    Some(span / s + 1)
}

/// Transposed-conv output size: (h - 1)·s - 2p + k.
fn convt_out(h: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    ((h - 1) * s + k).checked_sub(2 * p).filter(|&v| v > 0)
}

/// One instantiated layer: spec, resolved shapes and parameters.
#[derive(Clone, Debug)]
pub struct Layer<S: Real> {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Per-layer forward state kept for the backward pass.
pub enum LayerCache<S: Real> {
    Dense { input: Vec<S> },
    Conv { patches: Vec<S> },
    ConvT { x_rows: Vec<S> },
    Relu { input: Vec<S> },
    Tanh { output: Vec<S> },
    None,
}

pub struct LayerGrads<S: Real> {
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
    pub input: Tensor<S>,
}

impl<S: Real> Layer<S> {
    /// Forward pass over a batch; `keep_cache` controls backward support.
    pub fn forward(&self, input: &Tensor<S>, keep_cache: bool) -> (Tensor<S>, LayerCache<S>) {
        let batch = input.shape()[0];
        match self.spec {
            LayerSpec::Dense { out_features } => {
                let fan_in: usize = self.in_shape.iter().product();
                let x = input.data();
                let mut out = vec![S::zero(); batch * out_features];
                matmul(x, self.weights.data(), &mut out, batch, fan_in, out_features);
                for row in out.chunks_exact_mut(out_features) {
                    for (v, b) in row.iter_mut().zip(self.bias.data()) {
                        *v += *b;
                    }
                }
                let cache = if keep_cache {
                    LayerCache::Dense { input: x.to_vec() }
                } else {
                    LayerCache::None
                };
                let mut shape = vec![batch];
                shape.extend_from_slice(&self.out_shape);
                (Tensor::from_vec(&shape, out).expect("dense shape"), cache)
            }
            LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
                let (c, h, w) = as_chw(&self.in_shape).expect("validated");
                let (oh, ow) = {
                    let (_, oh, ow) = as_chw(&self.out_shape).expect("validated");
                    (oh, ow)
                };
                let patches = im2col(input.data(), batch, c, h, w, kernel, stride, padding, oh, ow);
                let rows = batch * oh * ow;
                let kk = c * kernel * kernel;
                // weights (F, kk) -> transpose to (kk, F) for patches · Wt
                let wt = transpose(self.weights.data(), out_channels, kk);
                let mut out_mat = vec![S::zero(); rows * out_channels];
                matmul(&patches, &wt, &mut out_mat, rows, kk, out_channels);
                for row in out_mat.chunks_exact_mut(out_channels) {
                    for (v, b) in row.iter_mut().zip(self.bias.data()) {
                        *v += *b;
                    }
                }
                let out = rows_to_nchw(&out_mat, batch, out_channels, oh, ow);
                let cache =
                    if keep_cache { LayerCache::Conv { patches } } else { LayerCache::None };
                (out, cache)
            }
            LayerSpec::ConvTranspose2d { out_channels, kernel, stride, padding } => {
                let (c, h, w) = as_chw(&self.in_shape).expect("validated");
                let (_, oh, ow) = as_chw(&self.out_shape).expect("validated");
                let x_rows = nchw_to_rows(input.data(), batch, c, h, w);
                let rows = batch * h * w;
                let fkk = out_channels * kernel * kernel;
                let mut prod = vec![S::zero(); rows * fkk];
                matmul(&x_rows, self.weights.data(), &mut prod, rows, c, fkk);
                let mut out = vec![S::zero(); batch * out_channels * oh * ow];
                col2im_scatter(
                    &prod,
                    &mut out,
                    batch,
                    out_channels,
                    oh,
                    ow,
                    h,
                    w,
                    kernel,
                    stride,
                    padding,
                );
                for b in 0..batch {
                    for f in 0..out_channels {
                        let bias = self.bias.data()[f];
                        let base = (b * out_channels + f) * oh * ow;
                        for v in &mut out[base..base + oh * ow] {
                            *v += bias;
                        }
                    }
                }
                let mut shape = vec![batch];
                shape.extend_from_slice(&self.out_shape);
                let out = Tensor::from_vec(&shape, out).expect("convt shape");
                let cache =
                    if keep_cache { LayerCache::ConvT { x_rows } } else { LayerCache::None };
                (out, cache)
            }
            LayerSpec::Activation { act } => {
                let mut out = input.data().to_vec();
                match act {
                    Activation::Relu => {
                        for v in &mut out {
                            if *v < S::zero() {
                                *v = S::zero();
                            }
                        }
                        let cache = if keep_cache {
                            LayerCache::Relu { input: input.data().to_vec() }
                        } else {
                            LayerCache::None
                        };
                        (Tensor::from_vec(input.shape(), out).expect("act shape"), cache)
                    }
                    Activation::Tanh => {
                        for v in &mut out {
                            *v = v.tanh();
                        }
                        let t = Tensor::from_vec(input.shape(), out).expect("act shape");
                        let cache = if keep_cache {
                            LayerCache::Tanh { output: t.data().to_vec() }
                        } else {
                            LayerCache::None
                        };
                        (t, cache)
                    }
                }
            }
        }
    }

    /// Backward pass from the gradient on this layer's output.
    pub fn backward(&self, grad_out: &Tensor<S>, cache: &LayerCache<S>) -> Result<LayerGrads<S>> {
        let batch = grad_out.shape()[0];
        let mut in_batch_shape = vec![batch];
        in_batch_shape.extend_from_slice(&self.in_shape);
        match self.spec {
            LayerSpec::Dense { out_features } => {
                let LayerCache::Dense { input } = cache else {
                    return Err(CoreError::State("dense backward without cache".into()));
                };
                let fan_in: usize = self.in_shape.iter().product();
                let dy = grad_out.data();
                // dW (in,out) = X^T (in,B) · dY (B,out)
                let xt = transpose(input, batch, fan_in);
                let mut dw = vec![S::zero(); fan_in * out_features];
                matmul(&xt, dy, &mut dw, fan_in, batch, out_features);
                // db = column sums of dY
                let mut db = vec![S::zero(); out_features];
                for row in dy.chunks_exact(out_features) {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += *g;
                    }
                }
                // dX (B,in) = dY (B,out) · W^T (out,in)
                let wt = transpose(self.weights.data(), fan_in, out_features);
                let mut dx = vec![S::zero(); batch * fan_in];
                matmul(dy, &wt, &mut dx, batch, out_features, fan_in);
                Ok(LayerGrads {
                    weights: Tensor::from_vec(&[fan_in, out_features], dw)?,
                    bias: Tensor::from_vec(&[out_features], db)?,
                    input: Tensor::from_vec(&in_batch_shape, dx)?,
                })
            }
            LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
                let LayerCache::Conv { patches } = cache else {
                    return Err(CoreError::State("conv2d backward without cache".into()));
                };
                let (c, h, w) = as_chw(&self.in_shape).expect("validated");
                let (_, oh, ow) = as_chw(&self.out_shape).expect("validated");
                let rows = batch * oh * ow;
                let kk = c * kernel * kernel;
                let dout_mat = nchw_to_rows(grad_out.data(), batch, out_channels, oh, ow);
                // db
                let mut db = vec![S::zero(); out_channels];
                for row in dout_mat.chunks_exact(out_channels) {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += *g;
                    }
                }
                // dW (F,kk) = dOut^T (F,rows) · P (rows,kk)
                let dout_t = transpose(&dout_mat, rows, out_channels);
                let mut dw = vec![S::zero(); out_channels * kk];
                matmul(&dout_t, patches, &mut dw, out_channels, rows, kk);
                // dP (rows,kk) = dOut (rows,F) · W (F,kk)
                let mut dpatches = vec![S::zero(); rows * kk];
                matmul(&dout_mat, self.weights.data(), &mut dpatches, rows, out_channels, kk);
                let mut dx = vec![S::zero(); batch * c * h * w];
                col2im_scatter(
                    &dpatches, &mut dx, batch, c, h, w, oh, ow, kernel, stride, padding,
                );
                Ok(LayerGrads {
                    weights: Tensor::from_vec(&[out_channels, kk], dw)?,
                    bias: Tensor::from_vec(&[out_channels], db)?,
                    input: Tensor::from_vec(&in_batch_shape, dx)?,
                })
            }
            LayerSpec::ConvTranspose2d { out_channels, kernel, stride, padding } => {
                let LayerCache::ConvT { x_rows } = cache else {
                    return Err(CoreError::State("conv_transpose2d backward without cache".into()));
                };
                let (c, h, w) = as_chw(&self.in_shape).expect("validated");
                let (_, oh, ow) = as_chw(&self.out_shape).expect("validated");
                let rows = batch * h * w;
                let fkk = out_channels * kernel * kernel;
                // db over all output positions
                let mut db = vec![S::zero(); out_channels];
                let dout = grad_out.data();
                for b in 0..batch {
                    for f in 0..out_channels {
                        let base = (b * out_channels + f) * oh * ow;
                        let mut acc = S::zero();
                        for v in &dout[base..base + oh * ow] {
                            acc += *v;
                        }
                        db[f] += acc;
                    }
                }
                // patches of dOut at every input-grid position
                let dout_patches =
                    im2col(dout, batch, out_channels, oh, ow, kernel, stride, padding, h, w);
                // dX rows (rows,C) = dOutPatches (rows,fkk) · W^T (fkk,C)
                let wt = transpose(self.weights.data(), c, fkk);
                let mut dx_rows = vec![S::zero(); rows * c];
                matmul(&dout_patches, &wt, &mut dx_rows, rows, fkk, c);
                let dx = rows_to_nchw(&dx_rows, batch, c, h, w);
                // dW (C,fkk) = X^T (C,rows) · dOutPatches (rows,fkk)
                let xt = transpose(x_rows, rows, c);
                let mut dw = vec![S::zero(); c * fkk];
                matmul(&xt, &dout_patches, &mut dw, c, rows, fkk);
                Ok(LayerGrads {
                    weights: Tensor::from_vec(&[c, fkk], dw)?,
                    bias: Tensor::from_vec(&[out_channels], db)?,
                    input: dx.reshape(&in_batch_shape)?,
                })
            }
            LayerSpec::Activation { act } => {
                let mut dx = grad_out.data().to_vec();
                match (act, cache) {
                    (Activation::Relu, LayerCache::Relu { input }) => {
                        for (d, x) in dx.iter_mut().zip(input) {
                            if *x <= S::zero() {
                                *d = S::zero();
                            }
                        }
                    }
                    (Activation::Tanh, LayerCache::Tanh { output }) => {
                        for (d, y) in dx.iter_mut().zip(output) {
                            *d = *d * (S::one() - *y * *y);
                        }
                    }
                    _ => return Err(CoreError::State("activation backward without cache".into())),
                }
                Ok(LayerGrads {
                    weights: Tensor::zeros(&[0]),
                    bias: Tensor::zeros(&[0]),
                    input: Tensor::from_vec(&in_batch_shape, dx)?,
                })
            }
        }
    }
}

/// Extracts (B·oh·ow, C·k·k) patches; out-of-bounds taps read as zero.
#[allow(clippy::too_many_arguments)]
fn im2col<S: Real>(
    input: &[S],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
) -> Vec<S> {
    let kk = c * k * k;
    let mut out = vec![S::zero(); batch * oh * ow * kk];
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let row_base = ((b * oh + oy) * ow + ox) * kk;
                for ch in 0..c {
                    let img_base = (b * c + ch) * h * w;
                    let col_base = row_base + ch * k * k;
                    for u in 0..k {
                        let iy = (oy * s + u) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = img_base + iy as usize * w;
                        let dst = col_base + u * k;
                        for v in 0..k {
                            let ix = (ox * s + v) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[dst + v] = input[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Scatter-adds (B·gh·gw, C·k·k) rows into a (B, C, h, w) image; the adjoint
/// of `im2col` with the same geometry, also the forward of conv_transpose2d.
#[allow(clippy::too_many_arguments)]
fn col2im_scatter<S: Real>(
    rows: &[S],
    out: &mut [S],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    gh: usize,
    gw: usize,
    k: usize,
    s: usize,
    p: usize,
) {
    let kk = c * k * k;
    for b in 0..batch {
        for gy in 0..gh {
            for gx in 0..gw {
                let row_base = ((b * gh + gy) * gw + gx) * kk;
                for ch in 0..c {
                    let img_base = (b * c + ch) * h * w;
                    let col_base = row_base + ch * k * k;
                    for u in 0..k {
                        let iy = (gy * s + u) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = img_base + iy as usize * w;
                        let src = col_base + u * k;
                        for v in 0..k {
                            let ix = (gx * s + v) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            out[dst + ix as usize] += rows[src + v];
                        }
                    }
                }
            }
        }
    }
}

/// (B, C, H, W) buffer -> (B·H·W, C) rows, position-major.
fn nchw_to_rows<S: Real>(input: &[S], batch: usize, c: usize, h: usize, w: usize) -> Vec<S> {
    let mut out = vec![S::zero(); batch * h * w * c];
    for b in 0..batch {
        for ch in 0..c {
            let src = (b * c + ch) * h * w;
            for pos in 0..h * w {
                out[(b * h * w + pos) * c + ch] = input[src + pos];
            }
        }
    }
    out
}

/// (B·H·W, C) rows -> (B, C, H, W) tensor.
fn rows_to_nchw<S: Real>(rows: &[S], batch: usize, c: usize, h: usize, w: usize) -> Tensor<S> {
    let mut out = vec![S::zero(); batch * c * h * w];
    for b in 0..batch {
        for ch in 0..c {
            let dst = (b * c + ch) * h * w;
            for pos in 0..h * w {
                out[dst + pos] = rows[(b * h * w + pos) * c + ch];
            }
        }
    }
    Tensor::from_vec(&[batch, c, h, w], out).expect("rows_to_nchw shape")
}
