//! One-shot consistency checks on the small configuration.

use nalgebra::SymmetricEigen;

use super::experiments::control_setup;
use super::{ExperimentSpec, ResultTable, RowKey};
use crate::eda::{shared_linearization_mode, TwinConfig};
use crate::error::Result;
use crate::linop::{assemble_dense, DenseOperator};
use crate::lmp::{choose_theta, SpectralLmp, SplitFactor, ThetaRule};
use crate::model::{adjoint_apply, integrate, tlm_apply_steps};
use crate::nystrom::{nystrom_evd, NystromConfig};
use crate::obs::{gop_adjoint, gop_tlm};
use crate::rng::{gaussian_matrix, gaussian_vector, stream};
use crate::{Matrix, Vector};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        CheckResult {
            name,
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

fn sorted_desc(m: Matrix) -> Vec<f64> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn spectral_norm_sym(m: &Matrix) -> f64 {
    sorted_desc(m.clone())
        .into_iter()
        .fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Worst normalized adjoint mismatch of the model TLM over windows 1..=n_steps
/// and of the observation operator.
pub fn adjoint_checks(twin: &TwinConfig, seed: u64, pairs: usize) -> Result<(f64, f64)> {
    let (ctx, control) = control_setup(twin)?;
    let traj = &control.traj;
    let n = twin.n;
    let mut model_worst = 0.0f64;
    let mut obs_worst = 0.0f64;
    let mut draw = 0u64;
    let mut next = |len: usize| {
        draw += 1;
        gaussian_vector(seed, stream::VALIDATION + (draw << 8), len)
    };
    for window in 1..=traj.n_steps() {
        for _ in 0..pairs {
            let v = next(n);
            let w = next(n);
            let mv = tlm_apply_steps(traj, &v, window)?;
            let mut ws = vec![Vector::zeros(n); window + 1];
            ws[window] = w.clone();
            let mtw = adjoint_apply(traj, &ws)?;
            let gap = (mv[window].dot(&w) - v.dot(&mtw)).abs() / (v.norm() * w.norm());
            model_worst = model_worst.max(gap);
        }
    }
    for _ in 0..pairs {
        let v = next(n);
        let w = next(ctx.p());
        let gv = gop_tlm(traj, &v, &ctx.net)?;
        let gtw = gop_adjoint(traj, &w, &ctx.net)?;
        obs_worst = obs_worst.max((gv.dot(&w) - v.dot(&gtw)).abs() / (v.norm() * w.norm()));
    }
    Ok((model_worst, obs_worst))
}

/// Ratios `e(ε)/e(ε/2)` of the first-order Taylor remainder of the window
/// forecast, for each ε.
pub fn taylor_ratios(twin: &TwinConfig, seed: u64, epsilons: &[f64]) -> Result<Vec<f64>> {
    let (_, control) = control_setup(twin)?;
    let model = twin.model();
    let x0 = control.background.clone();
    let traj = integrate(&x0, &model)?;
    let v = gaussian_vector(seed, stream::VALIDATION, twin.n);
    let mv = tlm_apply_steps(&traj, &v, model.n_steps)?
        .pop()
        .expect("window is non-empty");
    let remainder = |eps: f64| -> Result<f64> {
        let xp = integrate(&(&x0 + &v * eps), &model)?;
        Ok((xp.final_state() - traj.final_state() - &mv * eps).norm())
    };
    epsilons
        .iter()
        .map(|&eps| Ok(remainder(eps)? / remainder(eps / 2.0)?))
        .collect()
}

/// `‖A_N − A‖_F / ‖A‖_F` for a random rank-`rank` SPD matrix and a Gaussian
/// sketch of width `width ≥ rank`.
pub fn nystrom_exactness(n: usize, rank: usize, width: usize, seed: u64) -> Result<f64> {
    let x = gaussian_matrix(seed, stream::VALIDATION, n, rank);
    let a = &x * x.transpose();
    let psi = gaussian_matrix(seed, stream::SKETCH, n, width);
    let approx = nystrom_evd(
        &DenseOperator(a.clone()),
        &psi,
        &NystromConfig::new(width, 1),
    )?;
    Ok((approx.reconstruct() - &a).norm() / a.norm())
}

/// Worst relative deviation of the spectrum of `U_θ (I+A) U_θ` from the
/// k-fold θ cluster plus the untouched remaining eigenvalues, with exact
/// leading pairs of the dense control `A`.
pub fn lmp_surgery_error(twin: &TwinConfig, k: usize, rule: ThetaRule) -> Result<f64> {
    let (ctx, control) = control_setup(twin)?;
    let h = control.hessian(&ctx);
    let a = assemble_dense(&h)?;
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..twin.n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vectors = Matrix::from_columns(
        &order[..k]
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    let values = Vector::from_iterator(k, order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let theta = choose_theta(rule, 1.0 + values[k - 1]);
    let lmp = SpectralLmp::new(vectors, values, theta)?;
    let u = assemble_dense(&SplitFactor(&lmp))?;
    let i_plus_a = Matrix::identity(twin.n, twin.n) + a;
    let got = sorted_desc(&u * i_plus_a * u.transpose());
    let mut expected: Vec<f64> = order[k..]
        .iter()
        .map(|&i| 1.0 + eig.eigenvalues[i])
        .collect();
    expected.extend(std::iter::repeat_n(theta, k));
    expected.sort_by(|a, b| b.total_cmp(a));
    Ok(got
        .iter()
        .zip(&expected)
        .map(|(g, e)| (g - e).abs() / e.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Relative spectral-norm distance between the centered sample covariance
/// of Γ and `A + A²`, with every member sharing the control linearization.
pub fn gamma_covariance_error(twin: &TwinConfig, members: usize) -> Result<f64> {
    let cfg = TwinConfig {
        members,
        ..twin.clone()
    };
    let setup = shared_linearization_mode(&cfg)?;
    let h = setup.control.hessian(&setup.ctx);
    let a = assemble_dense(&h)?;
    let a = (&a + a.transpose()) * 0.5;
    let target = &a + &a * &a;
    let g = &setup.gamma.columns;
    let l = g.ncols() as f64;
    let mean = g.column_mean();
    let centered = Matrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] - mean[i]);
    let cov = &centered * centered.transpose() / (l - 1.0);
    Ok(spectral_norm_sym(&(cov - &target)) / spectral_norm_sym(&target))
}

/// Count of eigenvalues of the dense `I + A` above `1 + 1e-8`, and the
/// smallest eigenvalue.
pub fn rank_structure(twin: &TwinConfig) -> Result<(usize, f64)> {
    let (ctx, control) = control_setup(twin)?;
    let h = control.hessian(&ctx);
    let values = sorted_desc(assemble_dense(&h.shifted())?);
    let above = values.iter().filter(|&&v| v > 1.0 + 1e-8).count();
    Ok((above, *values.last().expect("non-empty spectrum")))
}

pub fn run_checks(spec: &ExperimentSpec) -> Result<Vec<CheckResult>> {
    let twin = &spec.twin;
    let seed = spec.seeds[0];
    let mut out = Vec::new();

    let (model_gap, obs_gap) = adjoint_checks(twin, seed, 10)?;
    out.push(CheckResult::at_most("tlm_adjoint", model_gap, 1e-10));
    out.push(CheckResult::at_most("obs_adjoint", obs_gap, 1e-10));

    let ratios = taylor_ratios(twin, seed, &[1e-2, 1e-3, 1e-4, 1e-5])?;
    let worst = ratios
        .iter()
        .copied()
        .max_by(|a, b| (a - 4.0).abs().total_cmp(&(b - 4.0).abs()))
        .unwrap_or(f64::NAN);
    out.push(CheckResult {
        name: "taylor_ratio",
        value: worst,
        threshold: 4.0,
        passed: ratios.iter().all(|r| (3.5..=4.5).contains(r)),
    });

    out.push(CheckResult::at_most(
        "nystrom_exactness",
        nystrom_exactness(50, 10, 10, seed)?,
        1e-8,
    ));

    let k = spec.ranks.first().copied().unwrap_or(20).min(twin.n);
    let rule = spec
        .theta_rules
        .first()
        .copied()
        .unwrap_or(ThetaRule::HalfSum);
    out.push(CheckResult::at_most(
        "lmp_surgery",
        lmp_surgery_error(twin, k, rule)?,
        1e-8,
    ));

    out.push(CheckResult::at_most(
        "gamma_covariance",
        gamma_covariance_error(twin, 2000)?,
        0.2,
    ));

    let (above, smallest) = rank_structure(twin)?;
    let p = twin.network()?.p();
    out.push(CheckResult::at_most(
        "rank_above_one",
        above as f64,
        p as f64,
    ));
    out.push(CheckResult::at_most(
        "smallest_eigenvalue_gap",
        (smallest - 1.0).abs(),
        1e-10,
    ));
    Ok(out)
}

pub fn run_validate(spec: &ExperimentSpec) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for check in run_checks(spec)? {
        let key = RowKey::new(spec.experiment, check.name).seed(spec.seeds[0]);
        table.rows.push(key.row(0, "value", check.value));
        table.rows.push(key.row(0, "threshold", check.threshold));
        table
            .rows
            .push(key.row(0, "pass", if check.passed { 1.0 } else { 0.0 }));
    }
    Ok(table)
}

/// Names of the checks whose `pass` row is zero.
pub fn failed_checks(table: &ResultTable) -> Vec<String> {
    table
        .rows
        .iter()
        .filter(|r| r.metric == "pass" && r.value == 0.0)
        .map(|r| r.variant.clone())
        .collect()
}
