//! Sketching matrices for the Nyström approximation.
//!
//! Besides the standard Gaussian block `Ψ`, the structured variants are
//! `A^{q-1} Ψ` (power method), `B Ψ`, `U_Bᵀ Ψ`, and the ensemble matrix `Γ`
//! whose columns are member right-hand sides minus the control right-hand
//! side.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assim::{HessianOperator, MemberProblem};
use crate::covariance::{CovarianceFactor, UbOperator};
use crate::error::{Error, Result};
use crate::linop::LinearOperator;
use crate::rng::{gaussian_matrix, stream};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SketchKind {
    /// `Ω = Ψ`.
    #[serde(rename = "psi")]
    Gaussian,
    /// `Ω = A Ψ`, run as a two-pass Nyström with `Φ = Ψ`.
    #[serde(rename = "a_psi")]
    PowerA,
    /// `Ω = B Ψ`.
    #[serde(rename = "b_psi")]
    BPsi,
    /// `Ω = U_Bᵀ Ψ`.
    #[serde(rename = "ubt_psi")]
    UbtPsi,
    /// `Ω = Γ`.
    #[serde(rename = "gamma")]
    RhsGamma,
}

impl SketchKind {
    pub const ALL: [SketchKind; 5] = [
        SketchKind::Gaussian,
        SketchKind::PowerA,
        SketchKind::BPsi,
        SketchKind::UbtPsi,
        SketchKind::RhsGamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Gaussian => "psi",
            SketchKind::PowerA => "a_psi",
            SketchKind::BPsi => "b_psi",
            SketchKind::UbtPsi => "ubt_psi",
            SketchKind::RhsGamma => "gamma",
        }
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SketchKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sketch kind `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct SketchMatrix {
    pub columns: Matrix,
    pub kind: SketchKind,
    pub seed: Option<u64>,
}

impl SketchMatrix {
    pub fn width(&self) -> usize {
        self.columns.ncols()
    }

    fn derived(&self, columns: Matrix, kind: SketchKind) -> Self {
        Self {
            columns,
            kind,
            seed: self.seed,
        }
    }
}

pub fn sketch_gaussian(n: usize, width: usize, seed: u64) -> Result<SketchMatrix> {
    if width == 0 {
        return Err(Error::Config("sketch width must be at least 1".into()));
    }
    Ok(SketchMatrix {
        columns: gaussian_matrix(seed, stream::SKETCH, n, width),
        kind: SketchKind::Gaussian,
        seed: Some(seed),
    })
}

/// `A^{q-1} Ψ`, applying `A` column-wise `q - 1` times.
pub fn sketch_power(h: &HessianOperator<'_>, psi: &SketchMatrix, q: usize) -> Result<SketchMatrix> {
    sketch_power_with(h, psi, q)
}

pub fn sketch_power_with<Op: LinearOperator + ?Sized>(
    op: &Op,
    psi: &SketchMatrix,
    q: usize,
) -> Result<SketchMatrix> {
    if q == 0 {
        return Err(Error::Config("power parameter q must be at least 1".into()));
    }
    let mut block = psi.columns.clone();
    for _ in 1..q {
        block = op.apply_block(&block)?;
    }
    let kind = if q == 1 { psi.kind } else { SketchKind::PowerA };
    Ok(psi.derived(block, kind))
}

/// `B Ψ = U_Bᵀ U_B Ψ`.
pub fn sketch_b(f: &CovarianceFactor, psi: &SketchMatrix) -> Result<SketchMatrix> {
    let ub = UbOperator(f);
    let once = ub.apply_block(&psi.columns)?;
    Ok(psi.derived(ub.apply_block(&once)?, SketchKind::BPsi))
}

/// `U_Bᵀ Ψ`.
pub fn sketch_ubt(f: &CovarianceFactor, psi: &SketchMatrix) -> Result<SketchMatrix> {
    Ok(psi.derived(UbOperator(f).apply_block(&psi.columns)?, SketchKind::UbtPsi))
}

/// Right-hand-side differences `γ_j = b_j - b_0`. `members[0]` must be the
/// control; the remaining members give the columns in order.
pub fn sketch_gamma(members: &[MemberProblem]) -> Result<SketchMatrix> {
    let Some((control, perturbed)) = members.split_first() else {
        return Err(Error::Config(
            "Γ needs a control and at least one member".into(),
        ));
    };
    if perturbed.is_empty() {
        return Err(Error::Config(
            "Γ needs at least one perturbed member".into(),
        ));
    }
    let cols: Vec<_> = perturbed.iter().map(|m| &m.rhs - &control.rhs).collect();
    Ok(SketchMatrix {
        columns: Matrix::from_columns(&cols),
        kind: SketchKind::RhsGamma,
        seed: None,
    })
}
