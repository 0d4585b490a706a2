use ppde_core::fem::assemble_gram;
use ppde_core::mesh::Mesh;
use ppde_core::nn::{lrelu, Layer};
use ppde_core::train::loss_and_grad;
use ppde_core::{CsrMatrix, Network, Record};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_architecture(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let depth = rng.random_range(1..=5);
    (0..=depth).map(|_| rng.random_range(1..=20)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn conversions_preserve_realizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..10 {
        let arch = random_architecture(&mut rng);
        let alpha = rng.random_range(0.05..0.95);
        let leaky = Network::init(&arch, 0.5, alpha, trial).unwrap();
        let relu = Network::init(&arch, 0.5, 0.0, 100 + trial).unwrap();
        let as_relu = leaky.to_relu().unwrap();
        let as_leaky = relu.to_lrelu(alpha).unwrap();
        assert_eq!(as_relu.alpha(), 0.0);
        assert_eq!(as_leaky.alpha(), alpha);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..arch[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d1 = max_abs_diff(&leaky.realize(&x).unwrap(), &as_relu.realize(&x).unwrap());
            let d2 = max_abs_diff(&relu.realize(&x).unwrap(), &as_leaky.realize(&x).unwrap());
            assert!(d1 <= 1e-9 && d2 <= 1e-9, "{arch:?} alpha={alpha}: {d1} {d2}");
        }
        for (src, dst) in [(&leaky, &as_relu), (&relu, &as_leaky)] {
            let (m1, m2) = (src.counts().weights, dst.counts().weights);
            assert!(m1 <= m2 && m2 <= 4 * m1, "{arch:?}: {m1} -> {m2}");
            assert_eq!(dst.depth(), src.depth());
        }
    }
}

#[test]
fn hidden_neurons_double_under_conversion() {
    let net = Network::init(&[4, 7, 3, 2], 1.0, 0.3, 1).unwrap();
    let c = net.to_relu().unwrap();
    assert_eq!(c.architecture(), vec![4, 14, 6, 2]);
    assert_eq!(c.counts().neurons, net.counts().neurons + 10);
}

#[test]
fn zero_bias_networks_are_positively_homogeneous() {
    let mut net = Network::init(&[3, 8, 8, 4], 1.0, 0.2, 9).unwrap();
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = rng.random_range(0.01..50.0);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let lhs = net.realize(&cx).unwrap();
        let rhs: Vec<f64> = net.realize(&x).unwrap().iter().map(|v| c * v).collect();
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-12 * c.max(1.0) * 10.0);
    }
}

fn loss(net: &Network, batch: &[Record], gram: &CsrMatrix) -> f64 {
    loss_and_grad(net, batch, gram).unwrap().0
}

/// Weights of layer `l` followed by its bias, as one flat index space.
fn param_mut(net: &mut Network, l: usize, i: usize) -> &mut f64 {
    let layer: &mut Layer = &mut net.layers_mut()[l];
    let n_w = layer.weights.len();
    if i < n_w {
        &mut layer.weights[i]
    } else {
        &mut layer.bias[i - n_w]
    }
}

fn smallest_pre_activation(net: &Network, batch: &[Record]) -> f64 {
    let inputs: Vec<f64> = batch.iter().flat_map(|r| r.y.iter().copied()).collect();
    let tape = net.forward_batch(&inputs, batch.len()).unwrap();
    (0..net.depth() - 1)
        .flat_map(|l| tape.pre_activations(l).to_vec())
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mesh = Mesh::build(4).unwrap();
    let gram = assemble_gram(&mesh);
    let d = mesh.dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let batch: Vec<Record> = (0..6)
        .map(|_| Record {
            y: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            u: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut net = (0..)
        .map(|seed| Network::init(&[3, 6, 5, d], 0.7, 0.2, seed).unwrap())
        .find(|n| smallest_pre_activation(n, &batch) > 1e-3)
        .unwrap();
    let (_, grads) = loss_and_grad(&net, &batch, &gram).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for l in 0..net.depth() {
        let n_w = net.layers()[l].weights.len();
        let n_b = net.layers()[l].bias.len();
        for i in 0..n_w + n_b {
            let analytic = if i < n_w {
                grads.layers[l].weights[i]
            } else {
                grads.layers[l].bias[i - n_w]
            };
            let orig = *param_mut(&mut net, l, i);
            *param_mut(&mut net, l, i) = orig + h;
            let up = loss(&net, &batch, &gram);
            *param_mut(&mut net, l, i) = orig - h;
            let down = loss(&net, &batch, &gram);
            *param_mut(&mut net, l, i) = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-2));
        }
    }
    assert!(worst < 1e-5, "worst relative deviation {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relu_lrelu_identities(x in -10.0f64..10.0, alpha in 0.0f64..0.99) {
        let relu = x.max(0.0);
        let via = (lrelu(x, alpha) + alpha * lrelu(-x, alpha)) / (1.0 - alpha * alpha);
        prop_assert!((relu - via).abs() <= 1e-12 * (1.0 + x.abs()) / (1.0 - alpha * alpha));
        let back = relu - alpha * (-x).max(0.0);
        prop_assert!((back - lrelu(x, alpha)).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    #[test]
    fn round_trip_conversion(seed in 0u64..1000, alpha in 0.05f64..0.9, width in 1usize..12) {
        let net = Network::init(&[2, width, width, 3], 0.8, alpha, seed).unwrap();
        let back = net.to_relu().unwrap().to_lrelu(alpha).unwrap();
        for x in [[0.3, -0.7], [-1.5, 0.2], [2.0, 2.0]] {
            let d = max_abs_diff(&net.realize(&x).unwrap(), &back.realize(&x).unwrap());
            prop_assert!(d <= 1e-9);
        }
    }

    #[test]
    fn batch_forward_matches_pointwise(seed in 0u64..1000, batch in 1usize..9) {
        let net = Network::init(&[3, 7, 4], 1.0, 0.2, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<f64> = (0..3 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tape = net.forward_batch(&inputs, batch).unwrap();
        for b in 0..batch {
            let single = net.realize(&inputs[3 * b..3 * b + 3]).unwrap();
            prop_assert!(max_abs_diff(&single, &tape.output()[4 * b..4 * b + 4]) <= 1e-12);
        }
    }
}
