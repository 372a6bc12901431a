//! Generalized observation operator: model propagation over the window
//! followed by sampling of selected grid points at selected steps.
//!
//! Observation vectors are laid out time-major: all observed grid points of
//! the first observed step, then the second step, and so on.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{
    adjoint_apply, integrate, tlm_apply_steps, ModelConfig, StateVector, Trajectory,
};
use crate::Vector;

pub type ObsVector = Vector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsNetwork {
    pub grid_indices: Vec<usize>,
    pub time_steps: Vec<usize>,
}

impl ObsNetwork {
    /// `n_obs` grid points at uniform stride `n / n_obs`, starting at 0.
    pub fn strided(n: usize, n_obs: usize, time_steps: Vec<usize>) -> Result<Self> {
        if n_obs == 0 || n_obs > n {
            return Err(Error::Config(format!(
                "cannot place {n_obs} observations on {n} grid points"
            )));
        }
        let stride = n / n_obs;
        Ok(Self {
            grid_indices: (0..n_obs).map(|i| i * stride).collect(),
            time_steps,
        })
    }

    /// `n_obs` contiguous grid points starting at 0.
    pub fn contiguous(n_obs: usize, time_steps: Vec<usize>) -> Self {
        Self {
            grid_indices: (0..n_obs).collect(),
            time_steps,
        }
    }

    pub fn p(&self) -> usize {
        self.grid_indices.len() * self.time_steps.len()
    }

    pub fn last_step(&self) -> usize {
        self.time_steps.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self, n: usize, n_steps: usize) -> Result<()> {
        if self.grid_indices.is_empty() || self.time_steps.is_empty() {
            return Err(Error::Config("observation network is empty".into()));
        }
        if let Some(i) = self.grid_indices.iter().find(|i| **i >= n) {
            return Err(Error::Config(format!(
                "observed grid index {i} outside [0, {n})"
            )));
        }
        if let Some(t) = self.time_steps.iter().find(|t| **t > n_steps) {
            return Err(Error::Config(format!(
                "observation step {t} outside window of {n_steps} steps"
            )));
        }
        Ok(())
    }

    /// Picks the observed entries out of a sequence of states indexed by step.
    pub fn sample(&self, states: &[Vector]) -> ObsVector {
        let ng = self.grid_indices.len();
        ObsVector::from_fn(self.p(), |k, _| {
            let t = self.time_steps[k / ng];
            states[t][self.grid_indices[k % ng]]
        })
    }

    /// Transpose of [`ObsNetwork::sample`]: scatters `w` into
    /// `last_step() + 1` zero-filled state-sized vectors.
    pub fn scatter(&self, w: &ObsVector, n: usize) -> Result<Vec<Vector>> {
        check_len("observation vector", self.p(), w.len())?;
        let ng = self.grid_indices.len();
        let mut out = vec![Vector::zeros(n); self.last_step() + 1];
        for (k, value) in w.iter().enumerate() {
            let t = self.time_steps[k / ng];
            out[t][self.grid_indices[k % ng]] += value;
        }
        Ok(out)
    }
}

/// `𝒢(x0)`: integrates over the window and samples.
pub fn gop_nonlinear(x0: &StateVector, net: &ObsNetwork, cfg: &ModelConfig) -> Result<ObsVector> {
    net.validate(cfg.n, cfg.n_steps)?;
    let traj = integrate(x0, cfg)?;
    Ok(net.sample(&traj.states))
}

/// `G dx` for the Jacobian linearized around `traj`.
pub fn gop_tlm(traj: &Trajectory, dx: &Vector, net: &ObsNetwork) -> Result<ObsVector> {
    net.validate(traj.dim(), traj.n_steps())?;
    let states = tlm_apply_steps(traj, dx, net.last_step())?;
    Ok(net.sample(&states))
}

/// `Gᵀ w`.
pub fn gop_adjoint(traj: &Trajectory, w: &ObsVector, net: &ObsNetwork) -> Result<StateVector> {
    net.validate(traj.dim(), traj.n_steps())?;
    let forcing = net.scatter(w, traj.dim())?;
    adjoint_apply(traj, &forcing)
}
