use ppde_core::dataset::Generator;
use ppde_core::nn::Layer;
use ppde_core::sparse::CsrMatrix;
use ppde_core::train::{self, adam_update, loss_and_grad, AdamState, TrainErrorMode};
use ppde_core::{Dataset, Network, ParametricFamily, Record, TrainConfig};
use proptest::prelude::*;

#[test]
fn adam_first_step_closed_form() {
    let cfg = TrainConfig::default();
    for g in [1e-3, 0.5, -2.0, 7.0] {
        let mut w = [0.25];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut w, &[g], &mut m, &mut v, 1, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
        let expect = 0.25 - cfg.lr * g / (g.abs() + cfg.eps);
        assert!((w[0] - expect).abs() < 1e-12);
    }
}

fn toy_problem() -> (Dataset, Dataset, Generator) {
    let family = ParametricFamily::trig_poly(3, -1.0, 1.0).unwrap();
    let generator = Generator::new(family, 7).unwrap();
    let train = generator.generate(48, 0).unwrap();
    let test = generator.generate(16, 1).unwrap();
    (train, test, generator)
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 10,
        lr: 1e-3,
        epochs: 8,
        seed: 3,
        test_every: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn seeded_runs_are_bitwise_identical() {
    let (train_set, test_set, g) = toy_problem();
    let run = || {
        let mut net = Network::init(&[3, 16, 16, 49], 0.1, 0.2, 5).unwrap();
        let h = train::train_with(
            &mut net,
            &train_set,
            Some(&test_set),
            g.gram(),
            &small_cfg(),
            TrainErrorMode::FullPass,
            |_| {},
        )
        .unwrap();
        (net, h)
    };
    let (n1, h1) = run();
    let (n2, h2) = run();
    assert_eq!(n1, n2);
    assert_eq!(h1, h2);
    let bits = |n: &Network| -> Vec<u64> {
        n.layers()
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&n1), bits(&n2));
    assert_eq!(h1.test_error.iter().map(|t| t.0).collect::<Vec<_>>(), vec![4, 8]);
}

#[test]
fn training_reduces_the_error() {
    let (train_set, test_set, g) = toy_problem();
    let mut net = Network::init(&[3, 16, 16, 49], 0.1, 0.2, 5).unwrap();
    let before = train::evaluate(&net, &train_set, g.gram()).unwrap().0;
    let cfg = TrainConfig { epochs: 60, ..small_cfg() };
    let h = train::train_with(&mut net, &train_set, Some(&test_set), g.gram(), &cfg, TrainErrorMode::Running, |_| {})
        .unwrap();
    assert_eq!(h.epochs(), 60);
    let after = train::evaluate(&net, &train_set, g.gram()).unwrap().0;
    assert!(after < 0.5 * before, "{before} -> {after}");
}

/// Single-layer (affine) network trained by full-batch steps on records that
/// an affine map reproduces exactly.
#[test]
fn affine_fit_loss_mostly_decreases() {
    let target = Layer::new(4, 2, vec![1.0, -0.5, 0.3, 0.8, -1.2, 0.4, 0.1, 0.9], vec![0.5, 1.0, -0.3, 2.0]).unwrap();
    let truth = Network::new(vec![target], 0.2).unwrap();
    let records: Vec<Record> = (0..20)
        .map(|i| {
            let y = vec![(i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()];
            let u = truth.realize(&y).unwrap();
            Record { y, u }
        })
        .collect();
    let gram = CsrMatrix::identity(4);
    let mut net = Network::new(vec![Layer::zeros(4, 2)], 0.2).unwrap();
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = 0.1);
    }
    let cfg = TrainConfig { lr: 1e-2, ..TrainConfig::default() };
    let mut adam = AdamState::new(&net);
    let mut losses = Vec::new();
    for _ in 0..50 {
        let (loss, grads) = loss_and_grad(&net, &records, &gram).unwrap();
        losses.push(loss);
        adam.step(&mut net, &grads, &cfg).unwrap();
    }
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 5, "{rises} increases: {losses:?}");
    assert!(losses[49] < losses[0], "{losses:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_is_scale_invariant(c in 0.01f64..100.0, seed in 0u64..100) {
        let net = Network::init(&[2, 5, 3], 0.5, 0.2, seed).unwrap();
        let mut scaled = net.clone();
        if let Some(last) = scaled.layers_mut().last_mut() {
            last.weights.iter_mut().chain(last.bias.iter_mut()).for_each(|w| *w *= c);
        }
        let gram = CsrMatrix::identity(3);
        let recs: Vec<Record> = (0..4)
            .map(|i| Record { y: vec![i as f64 * 0.3, -0.2], u: vec![1.0, i as f64, -0.5] })
            .collect();
        let scaled_recs: Vec<Record> = recs
            .iter()
            .map(|r| Record { y: r.y.clone(), u: r.u.iter().map(|v| v * c).collect() })
            .collect();
        let (l1, _) = loss_and_grad(&net, &recs, &gram).unwrap();
        let (l2, _) = loss_and_grad(&scaled, &scaled_recs, &gram).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-12 * l1.max(1.0));
    }

    #[test]
    fn every_record_once_per_epoch(n in 1usize..300, seed in 0u64..50, epoch in 1usize..100) {
        let mut perm = train::epoch_permutation(n, seed, epoch);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..n).collect::<Vec<_>>());
    }
}
