//! Preconditioned conjugate gradients with quadratic-cost tracing, and a
//! fully reorthogonalized Lanczos eigensolver used as the reference oracle
//! for large operators.

use nalgebra::SymmetricEigen;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linop::LinearOperator;
use crate::rng::{stream, stream_rng};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `‖r‖ ≤ residual_rtol · ‖b‖`. Zero disables the test.
    pub residual_rtol: f64,
    pub trace_cost: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 40,
            residual_rtol: 0.0,
            trace_cost: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: Option<f64>,
    /// `sqrt(rᵀ P r)`.
    pub residual_norm: f64,
    /// Cumulative applications of the system operator.
    pub matvecs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Entry 0 is the initial guess.
    pub records: Vec<IterationRecord>,
    pub status: SolveStatus,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.cost).collect()
    }

    /// True if no cost increases by more than `rtol` relative.
    pub fn cost_is_monotone(&self, rtol: f64) -> bool {
        self.costs()
            .windows(2)
            .all(|w| w[1] <= w[0] + rtol * w[0].abs())
    }
}

/// Cost monitor evaluated at each iterate.
pub type CostFn<'a> = dyn Fn(&Vector) -> Result<f64> + 'a;

/// Solves `op x = b` from `x0 = 0` with preconditioner `precond` (identity
/// when `None`).
pub fn pcg<Op: LinearOperator + ?Sized>(
    op: &Op,
    b: &Vector,
    precond: Option<&dyn LinearOperator>,
    cfg: &SolverConfig,
    cost: Option<&CostFn<'_>>,
) -> Result<(Vector, SolveTrace)> {
    let n = op.dim();
    check_len("PCG right-hand side", n, b.len())?;
    if cfg.max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if let Some(p) = precond {
        check_len("PCG preconditioner", n, p.dim())?;
    }
    let precondition = |r: &Vector| -> Result<Vector> {
        match precond {
            Some(p) => p.apply(r),
            None => Ok(r.clone()),
        }
    };
    let monitor = |x: &Vector| -> Result<Option<f64>> {
        match (cfg.trace_cost, cost) {
            (true, Some(f)) => f(x).map(Some),
            _ => Ok(None),
        }
    };

    let b_norm = b.norm();
    let mut x = Vector::zeros(n);
    let mut r = b.clone();
    let mut z = precondition(&r)?;
    let mut rz = r.dot(&z);
    let mut dir = z.clone();
    let mut records = vec![IterationRecord {
        iteration: 0,
        cost: monitor(&x)?,
        residual_norm: rz.max(0.0).sqrt(),
        matvecs: 0,
    }];
    let converged = |r: &Vector| r.norm() <= cfg.residual_rtol * b_norm || r.norm() == 0.0;
    if converged(&r) {
        return Ok((
            x,
            SolveTrace {
                records,
                status: SolveStatus::Converged,
            },
        ));
    }

    let mut status = SolveStatus::MaxIterations;
    for iteration in 1..=cfg.max_iters {
        let q = op.apply(&dir)?;
        let curvature = dir.dot(&q);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown {
                iteration,
                curvature,
            });
        }
        let alpha = rz / curvature;
        x.axpy(alpha, &dir, 1.0);
        r.axpy(-alpha, &q, 1.0);
        z = precondition(&r)?;
        let rz_next = r.dot(&z);
        records.push(IterationRecord {
            iteration,
            cost: monitor(&x)?,
            residual_norm: rz_next.max(0.0).sqrt(),
            matvecs: iteration,
        });
        if converged(&r) {
            status = SolveStatus::Converged;
            break;
        }
        let beta = rz_next / rz;
        rz = rz_next;
        dir = &z + dir * beta;
    }
    Ok((x, SolveTrace { records, status }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanczosResult {
    /// Leading Ritz values, non-increasing.
    pub values: Vec<f64>,
    /// Residual bound `‖A y - θ y‖` for each Ritz pair.
    pub residuals: Vec<f64>,
    pub steps: usize,
    pub restarts: usize,
}

fn orthogonalize(w: &mut Vector, basis: &[Vector]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for v in basis {
            let c = v.dot(w);
            w.axpy(-c, v, 1.0);
        }
    }
}

/// `m`-step Lanczos with full reorthogonalization. An invariant subspace
/// (β below tolerance) triggers a restart with a fresh random vector
/// orthogonal to the current basis.
pub fn lanczos_eigs<Op: LinearOperator + ?Sized>(
    op: &Op,
    m: usize,
    n_eigs: usize,
    seed: u64,
) -> Result<LanczosResult> {
    let n = op.dim();
    let m = m.min(n);
    if n_eigs == 0 || n_eigs > m {
        return Err(Error::Config(format!(
            "need 1 <= n_eigs ({n_eigs}) <= m ({m})"
        )));
    }
    let mut rng = stream_rng(seed, stream::LANCZOS);
    let mut fresh = |basis: &[Vector]| -> Vector {
        loop {
            let mut v = Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            orthogonalize(&mut v, basis);
            let norm = v.norm();
            if norm > 1e-8 {
                return v / norm;
            }
        }
    };

    let mut basis: Vec<Vector> = Vec::with_capacity(m + 1);
    let mut alphas = Vec::with_capacity(m);
    // Coupling between step j and j+1; zero across restarts.
    let mut couplings: Vec<f64> = Vec::with_capacity(m);
    // Norm of the discarded residual at each restart.
    let mut dropped: Vec<(usize, f64)> = Vec::new();
    let mut scale = 0.0f64;
    let mut restarts = 0;

    basis.push(fresh(&[]));
    let mut last_beta = 0.0;
    for j in 0..m {
        let mut w = op.apply(&basis[j])?;
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        w.axpy(-alpha, &basis[j], 1.0);
        if j > 0 {
            w.axpy(-couplings[j - 1], &basis[j - 1], 1.0);
        }
        orthogonalize(&mut w, &basis);
        let beta = w.norm();
        scale = scale.max(alpha.abs() + beta);
        if j + 1 == m {
            last_beta = beta;
            break;
        }
        if beta <= 1e-10 * scale {
            dropped.push((j, beta));
            couplings.push(0.0);
            let next = fresh(&basis);
            basis.push(next);
            restarts += 1;
        } else {
            couplings.push(beta);
            basis.push(w / beta);
        }
    }

    let steps = alphas.len();
    let t = Matrix::from_fn(steps, steps, |i, k| {
        if i == k {
            alphas[i]
        } else if i + 1 == k {
            couplings[i]
        } else if k + 1 == i {
            couplings[k]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..steps).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let take = &order[..n_eigs];
    let values = take.iter().map(|i| eig.eigenvalues[*i]).collect();
    let residuals = take
        .iter()
        .map(|i| {
            let s = eig.eigenvectors.column(*i);
            let mut bound = last_beta * s[steps - 1].abs();
            for (j, beta) in &dropped {
                bound += beta * s[*j].abs();
            }
            bound
        })
        .collect();
    Ok(LanczosResult {
        values,
        residuals,
        steps,
        restarts,
    })
}
