//! First-level preconditioned 4D-Var system
//!
//! ```text
//! (I + A) δz = b,   A = U_Bᵀ Gᵀ R⁻¹ G U_B,   b = U_Bᵀ Gᵀ R⁻¹ d,
//! ```
//!
//! with `δx = U_B δz`, and the quadratic cost evaluated in `z` coordinates.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::covariance::{CovarianceFactor, ObservationError};
use crate::error::{check_len, Result};
use crate::linop::LinearOperator;
use crate::model::{integrate, ModelConfig, StateVector, Trajectory};
use crate::obs::{gop_adjoint, gop_tlm, ObsNetwork, ObsVector};
use crate::Vector;

/// Operators shared by every member of an ensemble: `B_j = B`, `R_j = R`,
/// same observation network.
#[derive(Debug, Clone)]
pub struct AssimContext {
    pub model: ModelConfig,
    pub net: ObsNetwork,
    pub factor: CovarianceFactor,
    pub obs_error: ObservationError,
}

impl AssimContext {
    pub fn new(
        model: ModelConfig,
        net: ObsNetwork,
        factor: CovarianceFactor,
        obs_error: ObservationError,
    ) -> Result<Self> {
        model.validate()?;
        net.validate(model.n, model.n_steps)?;
        check_len("covariance factor size", model.n, factor.dim())?;
        Ok(Self {
            model,
            net,
            factor,
            obs_error,
        })
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn p(&self) -> usize {
        self.net.p()
    }

    /// `G U_B dz`.
    pub fn observe_increment(&self, traj: &Trajectory, dz: &Vector) -> Result<ObsVector> {
        let dx = self.factor.apply_ub(dz)?;
        gop_tlm(traj, &dx, &self.net)
    }

    /// `U_Bᵀ Gᵀ w`.
    pub fn adjoint_increment(&self, traj: &Trajectory, w: &ObsVector) -> Result<Vector> {
        let x = gop_adjoint(traj, w, &self.net)?;
        self.factor.apply_ubt(&x)
    }
}

/// One member of the ensemble (id 0 is the control).
#[derive(Debug, Clone)]
pub struct MemberProblem {
    pub id: usize,
    pub background: StateVector,
    pub observations: ObsVector,
    /// Linearization trajectory.
    pub traj: Arc<Trajectory>,
    pub innovation: ObsVector,
    pub rhs: Vector,
}

impl MemberProblem {
    /// Linearizes around `background`, computes `d = y - 𝒢(x^b)` and `b`.
    pub fn new(
        ctx: &AssimContext,
        id: usize,
        background: StateVector,
        observations: ObsVector,
    ) -> Result<Self> {
        let traj = Arc::new(integrate(&background, &ctx.model)?);
        Self::with_trajectory(ctx, id, background, observations, traj)
    }

    /// Like [`MemberProblem::new`] but linearized around a supplied trajectory.
    /// The innovation is still taken against the member's own background.
    pub fn with_trajectory(
        ctx: &AssimContext,
        id: usize,
        background: StateVector,
        observations: ObsVector,
        traj: Arc<Trajectory>,
    ) -> Result<Self> {
        check_len("member observations", ctx.p(), observations.len())?;
        let modelled = if traj.initial() == &background {
            ctx.net.sample(&traj.states)
        } else {
            ctx.net.sample(&integrate(&background, &ctx.model)?.states)
        };
        let innovation = &observations - modelled;
        let rhs = build_rhs(ctx, &traj, &innovation)?;
        Ok(Self {
            id,
            background,
            observations,
            traj,
            innovation,
            rhs,
        })
    }

    pub fn hessian<'a>(&'a self, ctx: &'a AssimContext) -> HessianOperator<'a> {
        HessianOperator::new(ctx, &self.traj)
    }
}

/// `b = U_Bᵀ Gᵀ R⁻¹ d`.
pub fn build_rhs(ctx: &AssimContext, traj: &Trajectory, d: &ObsVector) -> Result<Vector> {
    check_len("innovation", ctx.p(), d.len())?;
    ctx.adjoint_increment(traj, &ctx.obs_error.apply_rinv(d))
}

/// `J(dz) = ½ dzᵀdz + ½ (G U_B dz - d)ᵀ R⁻¹ (G U_B dz - d)`.
pub fn quadratic_cost(ctx: &AssimContext, member: &MemberProblem, dz: &Vector) -> Result<f64> {
    check_len("control increment", ctx.n(), dz.len())?;
    let misfit = ctx.observe_increment(&member.traj, dz)? - &member.innovation;
    let obs_term = misfit.dot(&ctx.obs_error.apply_rinv(&misfit));
    Ok(0.5 * dz.dot(dz) + 0.5 * obs_term)
}

/// Matrix-free `A = U_Bᵀ Gᵀ R⁻¹ G U_B` around one linearization trajectory.
/// Every application counts as one matvec (one TLM plus one adjoint sweep).
pub struct HessianOperator<'a> {
    ctx: &'a AssimContext,
    traj: &'a Trajectory,
    matvecs: AtomicUsize,
}

impl<'a> HessianOperator<'a> {
    pub fn new(ctx: &'a AssimContext, traj: &'a Trajectory) -> Self {
        Self {
            ctx,
            traj,
            matvecs: AtomicUsize::new(0),
        }
    }

    pub fn context(&self) -> &'a AssimContext {
        self.ctx
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_matvecs(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
    }

    pub fn apply_a(&self, dz: &Vector) -> Result<Vector> {
        check_len("Hessian apply", self.ctx.n(), dz.len())?;
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        let g = self.ctx.observe_increment(self.traj, dz)?;
        self.ctx
            .adjoint_increment(self.traj, &self.ctx.obs_error.apply_rinv(&g))
    }

    pub fn apply_i_plus_a(&self, dz: &Vector) -> Result<Vector> {
        Ok(self.apply_a(dz)? + dz)
    }

    /// View of `I + A` as an operator sharing this operator's counter.
    pub fn shifted(&self) -> IPlusA<'_, 'a> {
        IPlusA(self)
    }
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.ctx.n()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        self.apply_a(x)
    }
}

pub struct IPlusA<'h, 'a>(&'h HessianOperator<'a>);

impl LinearOperator for IPlusA<'_, '_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        self.0.apply_i_plus_a(x)
    }
}
