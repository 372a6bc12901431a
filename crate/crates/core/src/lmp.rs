//! Scaled spectral limited-memory preconditioner
//!
//! ```text
//! P_θ = I + S_k (θ (Λ_k + I)⁻¹ - I) S_kᵀ = U_θ U_θᵀ,
//! U_θ = I + S_k (√θ (Λ_k + I)^{-1/2} - I) S_kᵀ,
//! ```
//!
//! where `Λ_k` holds (approximate) eigenvalues of `A`, so the leading
//! eigenvalues of `I + A` are `1 + Λ_k`. With exact pairs the preconditioned
//! matrix has those eigenvalues moved to `θ` and the rest untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linop::LinearOperator;
use crate::nystrom::EigenApproximation;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaRule {
    /// `θ = (λ_k(I+A) + 1) / 2`.
    HalfSum,
    /// `θ = λ_k(I+A)`.
    LambdaK,
    /// `θ = 1`.
    One,
}

impl ThetaRule {
    pub const ALL: [ThetaRule; 3] = [ThetaRule::HalfSum, ThetaRule::LambdaK, ThetaRule::One];

    pub fn name(self) -> &'static str {
        match self {
            ThetaRule::HalfSum => "half_sum",
            ThetaRule::LambdaK => "lambda_k",
            ThetaRule::One => "one",
        }
    }
}

impl fmt::Display for ThetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ThetaRule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown theta rule `{s}`")))
    }
}

/// `lambda_k_of_i_plus_a` is the k-th eigenvalue of `I + A` (not of `A`).
pub fn choose_theta(rule: ThetaRule, lambda_k_of_i_plus_a: f64) -> f64 {
    match rule {
        ThetaRule::HalfSum => 0.5 * (lambda_k_of_i_plus_a + 1.0),
        ThetaRule::LambdaK => lambda_k_of_i_plus_a,
        ThetaRule::One => 1.0,
    }
}

#[derive(Debug, Clone)]
pub struct SpectralLmp {
    vectors: Matrix,
    /// Eigenvalues of `A`.
    values: Vector,
    theta: f64,
}

impl SpectralLmp {
    pub fn new(vectors: Matrix, values: Vector, theta: f64) -> Result<Self> {
        check_len("LMP eigenvalues", vectors.ncols(), values.len())?;
        if values.is_empty() {
            return Err(Error::Config("LMP needs at least one eigenpair".into()));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Config(format!(
                "LMP scaling θ = {theta} must be positive"
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(
                "LMP eigenvalues of A must be non-negative".into(),
            ));
        }
        if values.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "LMP eigenvalues must be sorted descending".into(),
            ));
        }
        Ok(Self {
            vectors,
            values,
            theta,
        })
    }

    /// Builds the LMP from Nyström output, picking θ from `λ_k(I+A) = 1 + D_k`.
    pub fn from_approximation(approx: &EigenApproximation, rule: ThetaRule) -> Result<Self> {
        let lambda_k = 1.0 + approx.values[approx.rank() - 1];
        Self::new(
            approx.vectors.clone(),
            approx.values.clone(),
            choose_theta(rule, lambda_k),
        )
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    fn low_rank_update(&self, v: &Vector, weight: impl Fn(f64) -> f64) -> Result<Vector> {
        check_len("LMP apply", self.dim(), v.len())?;
        let mut coeffs = self.vectors.tr_mul(v);
        for (c, lambda) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= weight(*lambda);
        }
        Ok(v + &self.vectors * coeffs)
    }

    /// `U_θ v`.
    pub fn apply_u_theta(&self, v: &Vector) -> Result<Vector> {
        let sqrt_theta = self.theta.sqrt();
        self.low_rank_update(v, |lambda| sqrt_theta / (lambda + 1.0).sqrt() - 1.0)
    }

    /// `P_θ v = U_θ U_θᵀ v`.
    pub fn apply_p_theta(&self, v: &Vector) -> Result<Vector> {
        self.apply_u_theta(&self.apply_u_theta(v)?)
    }
}

impl LinearOperator for SpectralLmp {
    fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        self.apply_p_theta(x)
    }
}

/// `U_θ` as an operator, for split-preconditioned formulations.
pub struct SplitFactor<'a>(pub &'a SpectralLmp);

impl LinearOperator for SplitFactor<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        self.0.apply_u_theta(x)
    }
}
