use ppde_core::dataset::Generator;
use ppde_core::fem::gram_norm;
use ppde_core::{FamilyKind, ParametricFamily};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<ParametricFamily> {
    vec![
        ParametricFamily::trig_poly(6, 1.0, 0.01).unwrap(),
        ParametricFamily::trig_poly(3, -1.0, 1.0).unwrap(),
        ParametricFamily::chessboard(3, 1e-3).unwrap(),
        ParametricFamily::cookies_fixed(3, 0.8, 1e-4).unwrap(),
        ParametricFamily::cookies_variable(2, 1e-4).unwrap(),
        ParametricFamily::clipped_poly(3, 0.1).unwrap(),
    ]
}

fn random_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)]
}

#[test]
fn values_stay_between_shift_and_upper_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for f in families() {
        let ys = f.sample_parameters(10_000, 42);
        for y in &ys {
            let x = random_point(&mut rng);
            let a = f.eval(y, x);
            assert!(a >= f.mu, "{:?} {y:?} {x:?}: {a}", f.kind);
            assert!(a <= f.upper_bound() * (1.0 + 1e-12), "{:?}: {a}", f.kind);
        }
    }
}

fn unit(p: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; p];
    e[i] = 1.0;
    e
}

#[test]
fn affine_families_decompose() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for f in families().into_iter().filter(|f| f.is_affine()) {
        for y in f.sample_parameters(200, 3) {
            let x = random_point(&mut rng);
            let expect = f.mu
                + (0..f.p)
                    .map(|i| y[i] * (f.eval(&unit(f.p, i), x) - f.mu))
                    .sum::<f64>();
            assert!((f.eval(&y, x) - expect).abs() <= 1e-12 * expect, "{:?}", f.kind);
        }
    }
}

/// Midpoint test of affinity in `y`: returns a witness `(y1, y2, x)` with
/// `a((y1+y2)/2, x) != (a(y1, x) + a(y2, x)) / 2`.
fn non_affine_witness(f: &ParametricFamily) -> Option<(Vec<f64>, Vec<f64>, [f64; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ys = f.sample_parameters(4000, 9);
    ys.chunks_exact(2).find_map(|pair| {
        let x = random_point(&mut rng);
        let mid: Vec<f64> = pair[0].iter().zip(&pair[1]).map(|(a, b)| (a + b) / 2.0).collect();
        let lhs = f.eval(&mid, x);
        let rhs = (f.eval(&pair[0], x) + f.eval(&pair[1], x)) / 2.0;
        ((lhs - rhs).abs() > 1e-6).then(|| (pair[0].clone(), pair[1].clone(), x))
    })
}

#[test]
fn non_affine_families_have_witnesses() {
    for f in families() {
        let w = non_affine_witness(&f);
        match f.kind {
            FamilyKind::CookiesVariable | FamilyKind::ClippedPoly => assert!(w.is_some(), "{:?}", f.kind),
            _ => assert!(w.is_none(), "{:?}", f.kind),
        }
    }
}

#[test]
fn larger_trig_parameters_shrink_the_solution() {
    let family = ParametricFamily::trig_poly(2, 0.0, 1.0).unwrap();
    let generator = Generator::new(family, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let y: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..0.9)).collect();
        let bigger: Vec<f64> = y.iter().map(|v| rng.random_range(v + 0.01..=1.0)).collect();
        let small = gram_norm(&generator.solve(&bigger).unwrap(), generator.gram()).unwrap();
        let large = gram_norm(&generator.solve(&y).unwrap(), generator.gram()).unwrap();
        assert!(small < large, "{y:?} -> {bigger:?}: {large} vs {small}");
    }
}

#[test]
fn stored_solutions_satisfy_their_systems() {
    let family = ParametricFamily::cookies_variable(2, 1e-3).unwrap();
    let generator = Generator::new(family, 17).unwrap();
    let ds = generator.generate(40, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let rec = &ds.records[rng.random_range(0..ds.len())];
        assert!(family.parameter_box().contains(&rec.y));
        let sys = generator.system(&rec.y).unwrap();
        assert!(sys.relative_residual(&rec.u) <= 1e-8);
        assert!(gram_norm(&rec.u, generator.gram()).unwrap() > 0.0);
    }
}

#[test]
fn prefix_stability_across_counts() {
    let generator = Generator::new(ParametricFamily::chessboard(2, 0.1).unwrap(), 9).unwrap();
    let long = generator.generate(30, 12).unwrap();
    let short = generator.generate(11, 12).unwrap();
    assert_eq!(short.records[..], long.records[..11]);
    let other = generator.generate(11, 13).unwrap();
    assert_ne!(other.records[0], short.records[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipped_polynomial_is_clipped(k in 0usize..5, mu in 1e-4f64..1.0, seed in 0u64..500,
                                     x1 in 0.0f64..=1.0, x2 in 0.0f64..=1.0) {
        let f = ParametricFamily::clipped_poly(k, mu).unwrap();
        let y = f.sample_at(seed, 0);
        let exps = ppde_core::coefficients::monomial_exponents(k);
        let raw: f64 = y.iter().zip(&exps).map(|(c, &(a, b))| c * x1.powi(a as i32) * x2.powi(b as i32)).sum();
        prop_assert!((f.eval(&y, [x1, x2]) - raw.max(mu)).abs() <= 1e-12);
    }

    #[test]
    fn samples_lie_in_box(seed in 0u64..10_000, idx in 0u64..1000, which in 0usize..6) {
        let f = families()[which];
        prop_assert!(f.parameter_box().contains(&f.sample_at(seed, idx)));
    }

    #[test]
    fn chessboard_is_piecewise_constant(s in 1usize..6, seed in 0u64..100,
                                        x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
        let f = ParametricFamily::chessboard(s, 0.1).unwrap();
        let y = f.sample_at(seed, 0);
        let cell = ppde_core::coefficients::chessboard_cell(s, [x1, x2]);
        prop_assert!(cell < s * s);
        prop_assert_eq!(f.eval(&y, [x1, x2]), 0.1 + y[cell]);
    }
}
