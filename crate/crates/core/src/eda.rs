//! Identical-twin ensemble of data assimilations.
//!
//! A truth run provides synthetic observations. The control member uses
//! `y = 𝒢(x^t) + U_R η⁰` and `x^b = x^t + U_B η^b`; member `j` perturbs both,
//! `y_j = y + U_R η_j^o` and `x^b_j = x^b + U_B η_j^b`, and is linearized around
//! its own background unless shared linearization is requested.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assim::{AssimContext, MemberProblem};
use crate::covariance::{build_ub, DiffusionCovarianceConfig, ObservationError};
use crate::error::{Error, Result};
use crate::model::{forecast, ModelConfig, StateVector};
use crate::obs::{gop_nonlinear, ObsNetwork};
use crate::rng::{gaussian_vector, stream};
use crate::sketch::{sketch_gamma, SketchMatrix};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsLayout {
    Strided,
    Contiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinConfig {
    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Number of observed grid points.
    pub n_obs: usize,
    pub obs_steps: Vec<usize>,
    pub obs_layout: ObsLayout,
    pub sigma_o: f64,
    pub sigma_b: f64,
    pub length_scale: f64,
    pub diffusion_steps: u32,
    /// Number of perturbed members `L`.
    pub members: usize,
    pub spinup_steps: usize,
    /// Amplitude of the seeded perturbation of the equilibrium before spin-up.
    pub truth_perturbation: f64,
    pub obs_noise_scale: f64,
    pub background_noise_scale: f64,
    /// Seed of the truth and the control member.
    pub seed: u64,
    /// Seed of the member perturbations.
    pub ensemble_seed: u64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            n: 1500,
            forcing: 8.0,
            dt: 2.5e-2,
            n_steps: 10,
            n_obs: 50,
            obs_steps: vec![3, 6, 9],
            obs_layout: ObsLayout::Strided,
            sigma_o: 5e-2,
            sigma_b: 0.8,
            length_scale: 6.0,
            diffusion_steps: 10,
            members: 20,
            spinup_steps: 1000,
            truth_perturbation: 0.01,
            obs_noise_scale: 1.0,
            background_noise_scale: 1.0,
            seed: 0,
            ensemble_seed: 1,
        }
    }
}

impl TwinConfig {
    /// Reduced configuration (n = 120, p = 30) where dense oracles are cheap.
    pub fn small() -> Self {
        Self {
            n: 120,
            n_obs: 10,
            ..Self::default()
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            n: self.n,
            forcing: self.forcing,
            dt: self.dt,
            n_steps: self.n_steps,
        }
    }

    pub fn covariance(&self) -> DiffusionCovarianceConfig {
        DiffusionCovarianceConfig {
            n: self.n,
            sigma_b: self.sigma_b,
            length_scale: self.length_scale,
            diffusion_steps: self.diffusion_steps,
        }
    }

    pub fn network(&self) -> Result<ObsNetwork> {
        match self.obs_layout {
            ObsLayout::Strided => ObsNetwork::strided(self.n, self.n_obs, self.obs_steps.clone()),
            ObsLayout::Contiguous => {
                if self.n_obs > self.n {
                    return Err(Error::Config("more observations than grid points".into()));
                }
                Ok(ObsNetwork::contiguous(self.n_obs, self.obs_steps.clone()))
            }
        }
    }

    pub fn context(&self) -> Result<AssimContext> {
        AssimContext::new(
            self.model(),
            self.network()?,
            build_ub(&self.covariance())?,
            ObservationError::new(self.sigma_o)?,
        )
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSetup {
    pub ctx: AssimContext,
    pub truth: StateVector,
    pub control: MemberProblem,
    pub members: Vec<MemberProblem>,
    pub gamma: SketchMatrix,
}

impl EnsembleSetup {
    /// Control followed by the perturbed members.
    pub fn all_members(&self) -> impl Iterator<Item = &MemberProblem> {
        std::iter::once(&self.control).chain(self.members.iter())
    }
}

/// Spins up from the perturbed equilibrium onto the attractor.
pub fn make_truth(cfg: &TwinConfig) -> Result<StateVector> {
    let model = cfg.model();
    let x0 = Vector::from_element(cfg.n, cfg.forcing)
        + gaussian_vector(cfg.seed, stream::TRUTH, cfg.n) * cfg.truth_perturbation;
    forecast(&x0, &model, cfg.spinup_steps)
}

pub fn make_control(
    ctx: &AssimContext,
    cfg: &TwinConfig,
    truth: &StateVector,
) -> Result<MemberProblem> {
    let y_true = gop_nonlinear(truth, &ctx.net, &ctx.model)?;
    let eta_o = gaussian_vector(cfg.seed, stream::CONTROL_OBS, ctx.p());
    let eta_b = gaussian_vector(cfg.seed, stream::CONTROL_BACKGROUND, cfg.n);
    let y = y_true + ctx.obs_error.apply_ur(&eta_o);
    let xb = truth + ctx.factor.apply_ub(&eta_b)?;
    MemberProblem::new(ctx, 0, xb, y)
}

fn perturbed_inputs(
    ctx: &AssimContext,
    cfg: &TwinConfig,
    control: &MemberProblem,
    id: usize,
) -> Result<(StateVector, Vector)> {
    let eta_o = gaussian_vector(
        cfg.ensemble_seed,
        stream::MEMBER_OBS_BASE + id as u64,
        ctx.p(),
    );
    let eta_b = gaussian_vector(
        cfg.ensemble_seed,
        stream::MEMBER_BACKGROUND_BASE + id as u64,
        cfg.n,
    );
    let y = &control.observations + ctx.obs_error.apply_ur(&(eta_o * cfg.obs_noise_scale));
    let xb = &control.background + ctx.factor.apply_ub(&(eta_b * cfg.background_noise_scale))?;
    Ok((xb, y))
}

fn build_ensemble(cfg: &TwinConfig, shared: bool) -> Result<EnsembleSetup> {
    if cfg.members == 0 {
        return Err(Error::Config(
            "ensemble needs at least one perturbed member".into(),
        ));
    }
    let ctx = cfg.context()?;
    let truth = make_truth(cfg)?;
    let control = make_control(&ctx, cfg, &truth)?;
    let members: Vec<MemberProblem> = (1..=cfg.members)
        .into_par_iter()
        .map(|id| {
            let (xb, y) = perturbed_inputs(&ctx, cfg, &control, id)?;
            if shared {
                MemberProblem::with_trajectory(&ctx, id, xb, y, Arc::clone(&control.traj))
            } else {
                MemberProblem::new(&ctx, id, xb, y)
            }
        })
        .collect::<Result<_>>()?;
    // Γ is assembled once every member right-hand side exists.
    let mut all = Vec::with_capacity(members.len() + 1);
    all.push(control.clone());
    all.extend(members.iter().cloned());
    let gamma = sketch_gamma(&all)?;
    Ok(EnsembleSetup {
        ctx,
        truth,
        control,
        members,
        gamma,
    })
}

/// Builds the ensemble with each member linearized around its own background.
pub fn make_members(cfg: &TwinConfig) -> Result<EnsembleSetup> {
    build_ensemble(cfg, false)
}

/// Builds the ensemble with every member linearized around the control
/// trajectory, so all members share the control Hessian.
pub fn shared_linearization_mode(cfg: &TwinConfig) -> Result<EnsembleSetup> {
    build_ensemble(cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TwinConfig {
        TwinConfig {
            n: 40,
            n_obs: 8,
            members: 4,
            spinup_steps: 200,
            ..TwinConfig::default()
        }
    }

    #[test]
    fn truth_edge_cases() {
        let cfg = TwinConfig {
            spinup_steps: 0,
            truth_perturbation: 0.0,
            ..tiny()
        };
        assert_eq!(make_truth(&cfg).unwrap(), Vector::from_element(40, 8.0));
        assert_eq!(make_truth(&tiny()).unwrap(), make_truth(&tiny()).unwrap());
    }

    #[test]
    fn gamma_has_one_column_per_member() {
        let setup = make_members(&tiny()).unwrap();
        assert_eq!(setup.gamma.width(), 4);
        assert_eq!(setup.members.len(), 4);
        assert!(setup.members.iter().enumerate().all(|(i, m)| m.id == i + 1));
    }

    #[test]
    fn unperturbed_members_give_zero_gamma() {
        let cfg = TwinConfig {
            obs_noise_scale: 0.0,
            background_noise_scale: 0.0,
            ..tiny()
        };
        let setup = make_members(&cfg).unwrap();
        assert_eq!(setup.gamma.columns.amax(), 0.0);
        let setup = shared_linearization_mode(&cfg).unwrap();
        assert_eq!(setup.gamma.columns.amax(), 0.0);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let cfg = TwinConfig {
            members: 0,
            ..tiny()
        };
        assert!(make_members(&cfg).is_err());
    }
}
