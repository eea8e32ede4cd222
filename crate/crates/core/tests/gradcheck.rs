//! Central finite-difference checks of the reverse-mode gradients, run in the
//! engine's f64 instantiation so the difference quotient is meaningful at the
//! tested tolerance. Every layer kind gets at least 20 random instances.

use disentlab_core::nn::{mse_loss, Activation, InitScheme, LayerSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn eval_loss(net: &Network<f64>, input: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let out = net.infer(input).unwrap();
    mse_loss(&out, target).unwrap().0
}

/// Max |analytic - numeric| over all parameters and the input, relative to
/// the largest gradient magnitude seen (errors in a broken backward rule are
/// on the scale of the gradients themselves).
fn fd_relative_error(net: &mut Network<f64>, input: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let out = net.forward(input).unwrap();
    let (_, seed) = mse_loss(&out, target).unwrap();
    let grads = net.backward(&seed).unwrap();
    let analytic: Vec<Vec<f64>> =
        net.grad_slices(&grads).iter().map(|s| s.to_vec()).collect();

    let mut max_abs_diff = 0.0f64;
    let mut max_grad = 0.0f64;

    for (t_idx, a_tensor) in analytic.iter().enumerate() {
        for i in 0..a_tensor.len() {
            let orig = {
                let mut slices = net.param_slices_mut();
                let v = slices[t_idx][i];
                slices[t_idx][i] = v + H;
                v
            };
            let loss_p = eval_loss(net, input, target);
            {
                let mut slices = net.param_slices_mut();
                slices[t_idx][i] = orig - H;
            }
            let loss_m = eval_loss(net, input, target);
            {
                let mut slices = net.param_slices_mut();
                slices[t_idx][i] = orig;
            }
            let numeric = (loss_p - loss_m) / (2.0 * H);
            let a = a_tensor[i];
            max_abs_diff = max_abs_diff.max((a - numeric).abs());
            max_grad = max_grad.max(a.abs()).max(numeric.abs());
        }
    }

    // input gradient through the same difference quotient
    let a_input = grads.input.data().to_vec();
    let mut x = input.clone();
    for i in 0..a_input.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + H;
        let loss_p = eval_loss(net, &x, target);
        x.data_mut()[i] = orig - H;
        let loss_m = eval_loss(net, &x, target);
        x.data_mut()[i] = orig;
        let numeric = (loss_p - loss_m) / (2.0 * H);
        let a = a_input[i];
        max_abs_diff = max_abs_diff.max((a - numeric).abs());
        max_grad = max_grad.max(a.abs()).max(numeric.abs());
    }

    assert!(max_grad > 1e-6, "degenerate instance: all gradients vanish");
    max_abs_diff / max_grad
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn check_instances<F>(label: &str, count: usize, mut build: F)
where
    F: FnMut(&mut ChaCha8Rng, usize) -> (Network<f64>, Tensor<f64>, Tensor<f64>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD_u64);
    let mut worst: f64 = 0.0;
    for inst in 0..count {
        let (mut net, input, target) = build(&mut rng, inst);
        let err = fd_relative_error(&mut net, &input, &target);
        assert!(
            err < TOL,
            "{label} instance {inst}: relative error {err:.3e} >= {TOL:.0e}"
        );
        worst = worst.max(err);
    }
    println!("gradcheck {label}: {count} instances, worst relative error {worst:.3e}");
}

#[test]
fn dense_layers() {
    check_instances("dense", 20, |rng, _| {
        let d_in = rng.gen_range(2..6);
        let d_mid = rng.gen_range(2..8);
        let d_out = rng.gen_range(1..4);
        let batch = rng.gen_range(1..5);
        let specs = [
            LayerSpec::Dense { out_features: d_mid },
            LayerSpec::Activation { act: Activation::Tanh },
            LayerSpec::Dense { out_features: d_out },
        ];
        let net =
            Network::new(&[d_in], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let input = random_tensor(rng, &[batch, d_in], 1.0);
        let target = random_tensor(rng, &[batch, d_out], 1.0);
        (net, input, target)
    });
}

#[test]
fn tanh_activation() {
    check_instances("tanh", 20, |rng, _| {
        let d = rng.gen_range(2..7);
        let batch = rng.gen_range(1..4);
        let specs = [
            LayerSpec::Dense { out_features: d },
            LayerSpec::Activation { act: Activation::Tanh },
        ];
        let net = Network::new(&[d], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let input = random_tensor(rng, &[batch, d], 1.5);
        let target = random_tensor(rng, &[batch, d], 1.0);
        (net, input, target)
    });
}

#[test]
fn relu_activation() {
    // pre-activations are kept away from the kink by construction: inputs in
    // [0.2, 1.2] against identity-ish dense weights would still cross zero,
    // so instead we filter: resample until no pre-activation lies within 10·H
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD2);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    while done < 20 {
        let d = rng.gen_range(2..7);
        let batch = rng.gen_range(1..4);
        let specs = [
            LayerSpec::Dense { out_features: d },
            LayerSpec::Activation { act: Activation::Relu },
            LayerSpec::Dense { out_features: 2 },
        ];
        let mut net =
            Network::new(&[d], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let input = random_tensor(&mut rng, &[batch, d], 1.5);
        // probe pre-activations of the relu (output of layer 0)
        let pre = {
            let probe = Network::new(&[d], &specs[..1], InitScheme::FanInUniform, 0).unwrap();
            let mut probe = probe;
            probe
                .import_params(&net.export_params()[..2].to_vec())
                .unwrap();
            probe.infer(&input).unwrap()
        };
        if pre.data().iter().any(|v| v.abs() < 10.0 * H) {
            continue;
        }
        let target = random_tensor(&mut rng, &[batch, 2], 1.0);
        let err = fd_relative_error(&mut net, &input, &target);
        assert!(err < TOL, "relu instance {done}: relative error {err:.3e}");
        worst = worst.max(err);
        done += 1;
    }
    println!("gradcheck relu: 20 instances, worst relative error {worst:.3e}");
}

#[test]
fn conv2d_layers() {
    check_instances("conv2d", 20, |rng, _| {
        let c = rng.gen_range(1..3);
        let f = rng.gen_range(1..4);
        let (h, k, s, p) = *[
            (6usize, 4usize, 2usize, 1usize),
            (4, 3, 1, 1),
            (5, 3, 2, 1),
            (4, 2, 2, 0),
            (8, 4, 2, 1),
        ]
        .get(rng.gen_range(0..5))
        .unwrap();
        let batch = rng.gen_range(1..3);
        let specs = [
            LayerSpec::Conv2d { out_channels: f, kernel: k, stride: s, padding: p },
            LayerSpec::Activation { act: Activation::Tanh },
        ];
        let net =
            Network::new(&[c, h, h], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let out_shape: Vec<usize> =
            std::iter::once(batch).chain(net.output_shape().iter().copied()).collect();
        let input = random_tensor(rng, &[batch, c, h, h], 1.0);
        let target = random_tensor(rng, &out_shape, 1.0);
        (net, input, target)
    });
}

#[test]
fn conv_transpose2d_layers() {
    check_instances("conv_transpose2d", 20, |rng, inst| {
        // first instance pins the documented case: 1x4x4 input, k=4, s=2
        let (c, f, h, k, s, p, batch) = if inst == 0 {
            (1usize, 2usize, 4usize, 4usize, 2usize, 1usize, 1usize)
        } else {
            let c = rng.gen_range(1..3);
            let f = rng.gen_range(1..3);
            let (h, k, s, p) = *[
                (4usize, 4usize, 2usize, 1usize),
                (3, 3, 1, 1),
                (2, 4, 2, 0),
                (3, 2, 2, 1),
                (1, 4, 2, 1),
            ]
            .get(rng.gen_range(0..5))
            .unwrap();
            (c, f, h, k, s, p, rng.gen_range(1..3))
        };
        let specs = [
            LayerSpec::ConvTranspose2d { out_channels: f, kernel: k, stride: s, padding: p },
            LayerSpec::Activation { act: Activation::Tanh },
        ];
        let net =
            Network::new(&[c, h, h], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let out_shape: Vec<usize> =
            std::iter::once(batch).chain(net.output_shape().iter().copied()).collect();
        let input = random_tensor(rng, &[batch, c, h, h], 1.0);
        let target = random_tensor(rng, &out_shape, 1.0);
        (net, input, target)
    });
}

#[test]
fn mixed_stack() {
    check_instances("mixed conv+dense", 20, |rng, _| {
        let batch = rng.gen_range(1..3);
        let specs = [
            LayerSpec::Conv2d { out_channels: 2, kernel: 4, stride: 2, padding: 1 },
            LayerSpec::Activation { act: Activation::Tanh },
            LayerSpec::Dense { out_features: 3 },
            LayerSpec::Activation { act: Activation::Tanh },
            LayerSpec::Dense { out_features: 2 },
        ];
        let net =
            Network::new(&[1, 8, 8], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let input = random_tensor(rng, &[batch, 1, 8, 8], 1.0);
        let target = random_tensor(rng, &[batch, 2], 1.0);
        (net, input, target)
    });
}

#[test]
fn decoder_shaped_stack() {
    // latent -> dense -> conv_transpose chain, the decoder data path
    check_instances("decoder stack", 20, |rng, _| {
        let batch = rng.gen_range(1..3);
        let d = rng.gen_range(2..5);
        let specs = [
            LayerSpec::Dense { out_features: 4 },
            LayerSpec::Activation { act: Activation::Tanh },
            LayerSpec::ConvTranspose2d { out_channels: 2, kernel: 4, stride: 2, padding: 1 },
            LayerSpec::Activation { act: Activation::Tanh },
            LayerSpec::ConvTranspose2d { out_channels: 1, kernel: 3, stride: 1, padding: 1 },
        ];
        let net = Network::new(&[d], &specs, InitScheme::FanInUniform, rng.gen()).unwrap();
        let out_shape: Vec<usize> =
            std::iter::once(batch).chain(net.output_shape().iter().copied()).collect();
        let input = random_tensor(rng, &[batch, d], 1.0);
        let target = random_tensor(rng, &out_shape, 1.0);
        (net, input, target)
    });
}
