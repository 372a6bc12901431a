//! Background covariance `B = σ_b² C_B = U_B U_Bᵀ` built from an implicit
//! diffusion operator on the periodic grid, and the diagonal observation
//! covariance `R = σ_o² I`.
//!
//! On a uniform circle the diffusion operator is circulant, so `U_B` is
//! applied spectrally: forward FFT, multiply by a real even symbol, inverse FFT.
//! With `κ = D² / (4M)` the symbol of `U_B` at frequency `m` is
//!
//! ```text
//! u(m) = σ_b · γ · (1 + 4κ sin²(πm/n))^(-M)
//! ```
//!
//! where `γ` normalizes the diagonal of `C_B` to one.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linop::LinearOperator;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCovarianceConfig {
    pub n: usize,
    pub sigma_b: f64,
    /// Daley length-scale in grid units.
    pub length_scale: f64,
    /// Number of implicit diffusion steps in one application of `U_B`.
    pub diffusion_steps: u32,
}

impl Default for DiffusionCovarianceConfig {
    fn default() -> Self {
        Self {
            n: 1500,
            sigma_b: 0.8,
            length_scale: 6.0,
            diffusion_steps: 10,
        }
    }
}

impl DiffusionCovarianceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("covariance grid must be non-empty".into()));
        }
        if !(self.sigma_b > 0.0) {
            return Err(Error::Config(format!(
                "sigma_b = {} must be positive",
                self.sigma_b
            )));
        }
        if !(self.length_scale >= 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Config(format!(
                "length scale D = {} must be non-negative",
                self.length_scale
            )));
        }
        if self.diffusion_steps == 0 {
            return Err(Error::Config("diffusion steps M must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.length_scale * self.length_scale / (4.0 * self.diffusion_steps as f64)
    }
}

/// Circulant square-root factor `U_B = U_Bᵀ`, stored as its spectral symbol.
#[derive(Clone)]
pub struct CovarianceFactor {
    symbol: Vec<f64>,
    sigma_b: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CovarianceFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceFactor")
            .field("n", &self.symbol.len())
            .field("sigma_b", &self.sigma_b)
            .finish()
    }
}

pub fn build_ub(cfg: &DiffusionCovarianceConfig) -> Result<CovarianceFactor> {
    cfg.validate()?;
    let n = cfg.n;
    let kappa = cfg.kappa();
    let m_steps = cfg.diffusion_steps as i32;
    let damping: Vec<f64> = (0..n)
        .map(|m| {
            let s = (PI * m as f64 / n as f64).sin();
            (1.0 + 4.0 * kappa * s * s).powi(-m_steps)
        })
        .collect();
    let sum_sq: f64 = damping.iter().map(|d| d * d).sum();
    let gamma = (n as f64 / sum_sq).sqrt();
    let symbol = damping.iter().map(|d| cfg.sigma_b * gamma * d).collect();
    let mut planner = FftPlanner::new();
    Ok(CovarianceFactor {
        symbol,
        sigma_b: cfg.sigma_b,
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    })
}

impl CovarianceFactor {
    pub fn dim(&self) -> usize {
        self.symbol.len()
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn sigma_b(&self) -> f64 {
        self.sigma_b
    }

    fn filter(&self, v: &Vector, power: i32) -> Result<Vector> {
        let n = self.dim();
        check_len("covariance factor apply", n, v.len())?;
        let mut buf: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (c, s) in buf.iter_mut().zip(&self.symbol) {
            *c *= s.powi(power);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(Vector::from_iterator(n, buf.iter().map(|c| c.re * scale)))
    }

    /// `U_B v`. Since `U_B` is symmetric this is also `U_Bᵀ v`.
    pub fn apply_ub(&self, v: &Vector) -> Result<Vector> {
        self.filter(v, 1)
    }

    pub fn apply_ubt(&self, v: &Vector) -> Result<Vector> {
        self.filter(v, 1)
    }

    /// `B v = U_B U_Bᵀ v`.
    pub fn apply_b(&self, v: &Vector) -> Result<Vector> {
        self.filter(v, 2)
    }

    pub fn apply_ub_block(&self, block: &Matrix) -> Result<Matrix> {
        UbOperator(self).apply_block(block)
    }
}

pub fn apply_ub(f: &CovarianceFactor, v: &Vector) -> Result<Vector> {
    f.apply_ub(v)
}

/// `U_B` viewed as a linear operator.
pub struct UbOperator<'a>(pub &'a CovarianceFactor);

impl LinearOperator for UbOperator<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        self.0.apply_ub(x)
    }
}

/// `R = σ_o² I` with factor `U_R = σ_o I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationError {
    pub sigma_o: f64,
}

impl ObservationError {
    pub fn new(sigma_o: f64) -> Result<Self> {
        if sigma_o > 0.0 && sigma_o.is_finite() {
            Ok(Self { sigma_o })
        } else {
            Err(Error::Config(format!(
                "sigma_o = {sigma_o} must be positive"
            )))
        }
    }

    pub fn apply_ur(&self, v: &Vector) -> Vector {
        apply_ur(self.sigma_o, v)
    }

    pub fn apply_rinv(&self, v: &Vector) -> Vector {
        apply_rinv(self.sigma_o, v)
    }
}

pub fn apply_ur(sigma_o: f64, v: &Vector) -> Vector {
    v * sigma_o
}

pub fn apply_rinv(sigma_o: f64, v: &Vector) -> Vector {
    v / (sigma_o * sigma_o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_vector;

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
    fn zero_length_scale_is_scaled_identity() {
        let f = factor(32, 0.0, 10);
        assert!(f.symbol().iter().all(|s| (s - 0.8).abs() < 1e-15));
        let v = gaussian_vector(1, 0, 32);
        assert!((f.apply_ub(&v).unwrap() - &v * 0.8).amax() < 1e-14);
    }

    #[test]
    fn zero_maps_to_zero_and_constant_is_eigenvector() {
        let f = factor(64, 6.0, 10);
        assert_eq!(f.apply_ub(&Vector::zeros(64)).unwrap().amax(), 0.0);
        let ones = Vector::from_element(64, 1.0);
        let out = f.apply_ub(&ones).unwrap();
        assert!((out - ones * f.symbol()[0]).amax() < 1e-12);
    }

    #[test]
    fn symbol_is_positive_and_even() {
        let f = factor(50, 4.0, 6);
        let s = f.symbol();
        assert!(s.iter().all(|v| *v > 0.0));
        for m in 1..50 {
            assert!((s[m] - s[50 - m]).abs() < 1e-14);
        }
    }

    #[test]
    fn length_mismatch_errors() {
        let f = factor(16, 2.0, 2);
        assert!(f.apply_ub(&Vector::zeros(15)).is_err());
    }

    #[test]
    fn observation_covariance() {
        let v = Vector::from_element(5, 1.0);
        let rinv = apply_rinv(5e-2, &v);
        assert!(rinv.iter().all(|x| (x - 400.0).abs() < 1e-10));
        let w = gaussian_vector(2, 0, 5);
        let rw = apply_ur(5e-2, &apply_ur(5e-2, &w));
        assert!((&rw - &w * 2.5e-3).amax() < 1e-16);
        assert!((apply_rinv(5e-2, &rw) - &w).amax() < 1e-14);
        assert!(ObservationError::new(0.0).is_err());
    }
}
