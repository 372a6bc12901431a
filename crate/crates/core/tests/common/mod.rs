//! Dense reference computations shared by the integration tests. Nothing
//! here goes through the FFT or operator code paths it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use eda_sketch::assim::{AssimContext, MemberProblem};
use eda_sketch::eda::{make_control, make_truth, TwinConfig};
use eda_sketch::linop::LinearOperator;
use eda_sketch::{Matrix, Vector};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Dense circulant square root of the diffusion covariance, summed term by
/// term from its cosine series.
pub fn dense_ub(n: usize, sigma_b: f64, length_scale: f64, steps: u32) -> Matrix {
    let kappa = length_scale * length_scale / (4.0 * steps as f64);
    let base: Vec<f64> = (0..n)
        .map(|m| {
            let s = (PI * m as f64 / n as f64).sin();
            1.0 / (1.0 + 4.0 * kappa * s * s).powi(steps as i32)
        })
        .collect();
    let norm: f64 = base.iter().map(|b| b * b).sum::<f64>();
    let gamma = (n as f64 / norm).sqrt();
    let row: Vec<f64> = (0..n)
        .map(|d| {
            (0..n)
                .map(|m| base[m] * (2.0 * PI * (m * d) as f64 / n as f64).cos())
                .sum::<f64>()
                * sigma_b
                * gamma
                / n as f64
        })
        .collect();
    Matrix::from_fn(n, n, |i, j| row[(i + n - j) % n])
}

/// Dense matrix of an operator, column by column.
pub fn dense_of<Op: LinearOperator + ?Sized>(op: &Op) -> Matrix {
    let n = op.dim();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        m.set_column(j, &op.apply(&e).unwrap());
    }
    m
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
    let n = x.len();
    let m = f(x).len();
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    jac
}

/// Eigenvalues (descending) and matching eigenvectors of a symmetric matrix.
pub fn eigh_desc(m: &Matrix) -> (Vec<f64>, Matrix) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// Context and control member of a twin configuration.
pub fn control(twin: &TwinConfig) -> (AssimContext, MemberProblem) {
    let ctx = twin.context().unwrap();
    let truth = make_truth(twin).unwrap();
    let control = make_control(&ctx, twin, &truth).unwrap();
    (ctx, control)
}

/// Sample covariance of the columns of `x` around their mean.
pub fn sample_covariance(x: &Matrix) -> Matrix {
    let mean = x.column_mean();
    let c = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[i]);
    &c * c.transpose() / (x.ncols() as f64 - 1.0)
}
