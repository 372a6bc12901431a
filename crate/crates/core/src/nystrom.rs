//! q-pass randomized Nyström approximation of a symmetric positive
//! semidefinite operator.
//!
//! Given a sketch `Φ` (n × ℓ) the algorithm forms `Y = AΦ`, optionally runs
//! `q - 1` subspace-iteration passes with `Φ ← Q_Y`, and then factors the
//! small core `W = ΦᵀY = CᵀC` to obtain
//!
//! ```text
//! A_N = Y W⁻¹ Yᵀ = (Q_Y U_T) Σ_T² (Q_Y U_T)ᵀ,   T = R_Y C⁻¹ = U_T Σ_T V_Tᵀ.
//! ```
//!
//! Only n × ℓ and ℓ × ℓ dense blocks are ever formed.

use std::cmp::Ordering;

use crate::error::{check_len, Error, Result};
use crate::linop::LinearOperator;
use crate::{Matrix, Vector};

/// Regularization applied to `W` when its Cholesky factorization breaks down.
///
/// The shifts are expressed for a sketch with unit-norm columns and scaled by
/// the mean squared column norm of `Φ`, so they reduce to `ε‖AΦ‖_F` and
/// `ε trace(A)` for an orthonormal sketch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ShiftMode {
    /// Breakdown is a hard error.
    #[default]
    None,
    /// `ν = ε · trace(A)`. Without a supplied trace, `trace(W)/ℓ` is used
    /// (unbiased for Gaussian sketches).
    EpsTrace { trace: Option<f64> },
    /// `ν = ε · ‖Y‖_F`.
    EpsFrobY,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NystromConfig {
    /// Target rank `k ≤ ℓ`.
    pub rank: usize,
    /// Number of passes over the operator, `q ≥ 1`.
    pub passes: usize,
    pub shift: ShiftMode,
}

impl NystromConfig {
    pub fn new(rank: usize, passes: usize) -> Self {
        Self {
            rank,
            passes,
            shift: ShiftMode::None,
        }
    }

    pub fn with_shift(mut self, shift: ShiftMode) -> Self {
        self.shift = shift;
        self
    }
}

/// Approximate leading eigenpairs of `A`.
#[derive(Debug, Clone)]
pub struct EigenApproximation {
    /// n × k, orthonormal columns.
    pub vectors: Matrix,
    /// Non-increasing approximate eigenvalues of `A`.
    pub values: Vector,
    /// Shift actually added to `W` (zero when plain Cholesky succeeded).
    pub shift: f64,
}

impl EigenApproximation {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// Leading `k` pairs.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank() {
            return Err(Error::Config(format!(
                "cannot keep {k} of {} pairs",
                self.rank()
            )));
        }
        Ok(EigenApproximation {
            vectors: self.vectors.columns(0, k).into_owned(),
            values: self.values.rows(0, k).into_owned(),
            shift: self.shift,
        })
    }

    /// Dense `Ŝ_k D_k Ŝ_kᵀ`, for tests on small problems.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.vectors.nrows(), self.rank(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        scaled * self.vectors.transpose()
    }
}

fn thin_qr(y: &Matrix) -> (Matrix, Matrix) {
    let qr = y.clone().qr();
    (qr.q(), qr.r())
}

fn check_full_rank(phi: &Matrix) -> Result<()> {
    let r = thin_qr(phi).1;
    let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let tol = phi.nrows().max(phi.ncols()) as f64 * f64::EPSILON * max;
    match diag.iter().position(|d| !(*d > tol)) {
        Some(column) => Err(Error::RankDeficient { column }),
        None => Ok(()),
    }
}

/// Upper-triangular `C` with `CᵀC = W`. A pivot at or below `tol` is a
/// breakdown.
fn cholesky_upper(w: &Matrix, tol: f64) -> Result<Matrix> {
    let l = w.nrows();
    let mut c = Matrix::zeros(l, l);
    for j in 0..l {
        let mut pivot = w[(j, j)];
        for k in 0..j {
            pivot -= c[(k, j)] * c[(k, j)];
        }
        if !(pivot > tol) {
            return Err(Error::CholeskyBreakdown {
                pivot: j,
                value: pivot,
            });
        }
        let cjj = pivot.sqrt();
        c[(j, j)] = cjj;
        for i in (j + 1)..l {
            let mut s = w[(j, i)];
            for k in 0..j {
                s -= c[(k, j)] * c[(k, i)];
            }
            c[(j, i)] = s / cjj;
        }
    }
    Ok(c)
}

/// Cholesky of `W + νI` with `ν` chosen by `mode`. Plain Cholesky is tried
/// first; the shift is only used on breakdown. Returns `(C, ν)`.
///
/// `y` and `phi` provide the scale information the shift rules need.
pub fn shifted_cholesky(
    w: &Matrix,
    mode: ShiftMode,
    y: &Matrix,
    phi: &Matrix,
) -> Result<(Matrix, f64)> {
    let l = w.nrows();
    check_len("Cholesky core", l, w.ncols())?;
    let max_diag = (0..l).map(|i| w[(i, i)]).fold(0.0, f64::max);
    let tol = l as f64 * f64::EPSILON * max_diag;
    let err = match cholesky_upper(w, tol) {
        Ok(c) => return Ok((c, 0.0)),
        Err(e) => e,
    };
    let column_scale = if phi.ncols() > 0 {
        phi.norm_squared() / phi.ncols() as f64
    } else {
        1.0
    };
    let nu = match mode {
        ShiftMode::None => return Err(err),
        ShiftMode::EpsTrace { trace } => {
            let trace = trace.unwrap_or_else(|| w.trace() / (l as f64 * column_scale));
            f64::EPSILON * trace * column_scale
        }
        ShiftMode::EpsFrobY => f64::EPSILON * y.norm() * column_scale.sqrt(),
    };
    if !(nu > 0.0) {
        return Err(err);
    }
    let shifted = w + Matrix::identity(l, l) * nu;
    cholesky_upper(&shifted, 0.0).map(|c| (c, nu))
}

/// Runs the q-pass Nyström approximation of `op` with sketch `phi`.
pub fn nystrom_evd<Op: LinearOperator + ?Sized>(
    op: &Op,
    phi: &Matrix,
    cfg: &NystromConfig,
) -> Result<EigenApproximation> {
    let n = op.dim();
    let width = phi.ncols();
    check_len("sketch rows", n, phi.nrows())?;
    if width == 0 || width > n {
        return Err(Error::Config(format!(
            "sketch width {width} must be in 1..={n}"
        )));
    }
    if cfg.rank == 0 || cfg.rank > width {
        return Err(Error::Config(format!(
            "target rank {} must be in 1..={width}",
            cfg.rank
        )));
    }
    if cfg.passes == 0 {
        return Err(Error::Config(
            "number of passes q must be at least 1".into(),
        ));
    }
    check_full_rank(phi)?;

    let mut phi = phi.clone();
    let mut y = op.apply_block(&phi)?;
    let (mut q_y, mut r_y) = thin_qr(&y);
    for _ in 1..cfg.passes {
        phi = q_y;
        y = op.apply_block(&phi)?;
        (q_y, r_y) = thin_qr(&y);
    }

    let mut w = phi.transpose() * &y;
    // W is symmetric in exact arithmetic.
    w = (&w + w.transpose()) * 0.5;
    let (c, shift) = shifted_cholesky(&w, cfg.shift, &y, &phi)?;

    // T = R_Y C⁻¹  <=>  Cᵀ Tᵀ = R_Yᵀ.
    let t = c
        .transpose()
        .solve_lower_triangular(&r_y.transpose())
        .ok_or(Error::CholeskyBreakdown {
            pivot: 0,
            value: 0.0,
        })?
        .transpose();

    let svd = t.svd(true, false);
    let u_t = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| {
        svd.singular_values[*b]
            .partial_cmp(&svd.singular_values[*a])
            .unwrap_or(Ordering::Equal)
    });
    let keep = &order[..cfg.rank];
    let u_k = Matrix::from_columns(&keep.iter().map(|i| u_t.column(*i)).collect::<Vec<_>>());
    let values = Vector::from_iterator(
        cfg.rank,
        keep.iter().map(|i| svd.singular_values[*i].powi(2)),
    );
    Ok(EigenApproximation {
        vectors: q_y * u_k,
        values,
        shift,
    })
}
