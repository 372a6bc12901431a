mod common;

use common::{dense_ub, randn, rng, sample_covariance, spectral_norm};
use eda_sketch::eda::*;
use eda_sketch::linop::LinearOperator;
use eda_sketch::obs::gop_nonlinear;
use eda_sketch::Matrix;

#[test]
fn ensemble_is_a_pure_function_of_config() {
    let twin = TwinConfig::small();
    let a = make_members(&twin).unwrap();
    let b = make_members(&twin).unwrap();
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.gamma.columns, b.gamma.columns);
    let other = make_members(&TwinConfig {
        ensemble_seed: twin.ensemble_seed + 1,
        ..twin.clone()
    })
    .unwrap();
    assert_eq!(other.control.rhs, a.control.rhs);
    assert_ne!(other.gamma.columns, a.gamma.columns);
}

#[test]
fn spun_up_truth_stays_in_attractor_range() {
    let truth = make_truth(&TwinConfig::default()).unwrap();
    assert_eq!(truth.len(), 1500);
    assert!(truth.iter().all(|v| (-10.0..=15.0).contains(v)));
    // Well away from the equilibrium.
    assert!(truth.iter().map(|v| (v - 8.0).abs()).fold(0.0, f64::max) > 1.0);
}

#[test]
fn background_perturbations_sample_b() {
    let twin = TwinConfig {
        members: 5000,
        ..TwinConfig::small()
    };
    let setup = make_members(&twin).unwrap();
    let diffs = Matrix::from_columns(
        &setup
            .members
            .iter()
            .map(|m| &m.background - &setup.control.background)
            .collect::<Vec<_>>(),
    );
    let ub = dense_ub(
        twin.n,
        twin.sigma_b,
        twin.length_scale,
        twin.diffusion_steps,
    );
    let b = &ub * ub.transpose();
    let err = spectral_norm(&(sample_covariance(&diffs) - &b)) / spectral_norm(&b);
    assert!(err <= 0.15, "relative error {err}");
}

#[test]
fn observation_perturbations_have_zero_mean() {
    let n_draws = 10_000;
    let twin = TwinConfig {
        members: n_draws,
        ..TwinConfig::small()
    };
    let setup = make_members(&twin).unwrap();
    let p = setup.ctx.p();
    let mut mean = eda_sketch::Vector::zeros(p);
    for m in &setup.members {
        mean += &m.observations - &setup.control.observations;
    }
    mean /= n_draws as f64;
    let bound = 4.0 * twin.sigma_o / (n_draws as f64).sqrt();
    assert!(mean.amax() <= bound, "{} > {bound}", mean.amax());
}

#[test]
fn innovations_are_recomputable() {
    let setup = make_members(&TwinConfig::small()).unwrap();
    for m in setup.all_members() {
        let d = &m.observations
            - gop_nonlinear(&m.background, &setup.ctx.net, &setup.ctx.model).unwrap();
        assert!((d - &m.innovation).amax() <= 1e-14 * m.observations.amax());
    }
}

#[test]
fn members_have_their_own_linearization() {
    let setup = make_members(&TwinConfig::small()).unwrap();
    for m in &setup.members {
        assert_eq!(m.traj.initial(), &m.background);
        assert_ne!(m.traj.initial(), setup.control.traj.initial());
    }
    assert_eq!(setup.gamma.width(), 20);
}

#[test]
fn shared_mode_uses_the_control_hessian() {
    let twin = TwinConfig::small();
    let setup = shared_linearization_mode(&twin).unwrap();
    let hc = setup.control.hessian(&setup.ctx);
    let mut r = rng(3);
    for m in &setup.members {
        let hm = m.hessian(&setup.ctx);
        let v = randn(&mut r, twin.n);
        let a = hc.apply(&v).unwrap();
        assert!((hm.apply(&v).unwrap() - &a).norm() <= 1e-12 * a.norm());
    }
}

#[test]
fn shared_mode_without_noise_gives_zero_gamma() {
    let twin = TwinConfig {
        obs_noise_scale: 0.0,
        background_noise_scale: 0.0,
        ..TwinConfig::small()
    };
    let setup = shared_linearization_mode(&twin).unwrap();
    assert_eq!(setup.gamma.columns.amax(), 0.0);
}
