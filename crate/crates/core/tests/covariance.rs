mod common;

use common::{dense_ub, eigh_desc, randn, rng};
use eda_sketch::covariance::*;
use eda_sketch::Vector;
use proptest::prelude::*;

fn factor(n: usize, d: f64, m: u32) -> CovarianceFactor {
    build_ub(&DiffusionCovarianceConfig {
        n,
        sigma_b: 0.8,
        length_scale: d,
        diffusion_steps: m,
    })
    .unwrap()
}

#[test]
fn fft_apply_matches_dense_circulant() {
    for (n, d, m) in [(64, 6.0, 10), (120, 2.0, 2), (75, 8.0, 14)] {
        let f = factor(n, d, m);
        let dense = dense_ub(n, 0.8, d, m);
        let mut r = rng(n as u64);
        for _ in 0..5 {
            let v = randn(&mut r, n);
            let got = f.apply_ub(&v).unwrap();
            let want = &dense * &v;
            assert!((got - &want).norm() <= 1e-12 * want.norm());
        }
    }
}

#[test]
fn correlation_is_spd_with_unit_diagonal() {
    let n = 64;
    let f = factor(n, 6.0, 10);
    let ub = common::dense_of(&UbOperator(&f));
    let c = &ub * ub.transpose() / 0.64;
    assert!((&c - c.transpose()).amax() <= 1e-12);
    for i in 0..n {
        assert!((c[(i, i)] - 1.0).abs() <= 1e-12);
    }
    let (values, _) = eigh_desc(&c);
    assert!(values[n - 1] > 0.0);
}

#[test]
fn background_variance_is_sigma_b_squared() {
    for d in [2.0, 4.0, 6.0, 8.0] {
        for m in [2, 6, 10, 14] {
            let f = factor(90, d, m);
            let mut e = Vector::zeros(90);
            e[17] = 1.0;
            let b = f.apply_b(&e).unwrap();
            assert!((b[17] - 0.64).abs() <= 1e-12, "D={d} M={m}: {}", b[17]);
        }
    }
}

#[test]
fn correlation_decays_monotonically_to_half_circle() {
    let n = 120;
    for d in [2.0, 4.0, 6.0, 8.0] {
        for m in [2, 6, 10, 14] {
            let mut e = Vector::zeros(n);
            e[0] = 1.0;
            let b = factor(n, d, m).apply_b(&e).unwrap();
            for k in 1..=n / 2 {
                // Far tails sit at rounding level.
                assert!(b[k] <= b[k - 1] + 1e-14 * b[0], "D={d} M={m} distance {k}");
            }
        }
    }
}

#[test]
fn length_scale_widens_correlation() {
    let n = 120;
    let mut e = Vector::zeros(n);
    e[0] = 1.0;
    let at = |d: f64| factor(n, d, 10).apply_b(&e).unwrap()[6];
    assert!(at(2.0) < at(4.0) && at(4.0) < at(6.0) && at(6.0) < at(8.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ub_is_symmetric(seed in 0u64..10_000, d in 0.5f64..10.0, m in 1u32..16) {
        let f = factor(50, d, m);
        let mut r = rng(seed);
        let u = randn(&mut r, 50);
        let v = randn(&mut r, 50);
        let lhs = f.apply_ub(&u).unwrap().dot(&v);
        let rhs = u.dot(&f.apply_ub(&v).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * u.norm() * v.norm());
    }

    #[test]
    fn b_is_positive_definite(seed in 0u64..10_000, d in 0.5f64..10.0, m in 1u32..16) {
        let f = factor(50, d, m);
        let v = randn(&mut rng(seed), 50);
        prop_assert!(v.dot(&f.apply_b(&v).unwrap()) > 0.0);
    }
}
