//! Lorenz-96 dynamics on a periodic latitude circle, integrated with the
//! classical fourth-order Runge-Kutta scheme.
//!
//! The tangent-linear and adjoint propagators differentiate the discrete RK4
//! step itself (not the continuous ODE), so `⟨M v, w⟩ = ⟨v, Mᵀ w⟩` holds to
//! rounding and the assembled Hessian is exactly symmetric.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::Vector;

pub type StateVector = Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n: 1500,
            forcing: 8.0,
            dt: 2.5e-2,
            n_steps: 10,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Config(format!(
                "state size n = {} must be at least 4",
                self.n
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "time step dt = {} must be positive",
                self.dt
            )));
        }
        if !self.forcing.is_finite() {
            return Err(Error::Config("forcing must be finite".into()));
        }
        Ok(())
    }
}

fn check_state_size(n: usize) -> Result<()> {
    if n < 4 {
        Err(Error::Config(format!(
            "Lorenz-96 needs at least 4 grid points, got {n}"
        )))
    } else {
        Ok(())
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// dX_j/dt = (X_{j+1} - X_{j-2}) X_{j-1} - X_j + F with cyclic indexing.
pub fn tendency(x: &StateVector, forcing: f64) -> Result<StateVector> {
    let n = x.len();
    check_state_size(n)?;
    Ok(tendency_unchecked(x, forcing))
}

fn tendency_unchecked(x: &StateVector, forcing: f64) -> StateVector {
    let n = x.len();
    Vector::from_fn(n, |j, _| {
        let j = j as isize;
        let xm2 = x[wrap(j - 2, n)];
        let xm1 = x[wrap(j - 1, n)];
        let xp1 = x[wrap(j + 1, n)];
        (xp1 - xm2) * xm1 - x[j as usize] + forcing
    })
}

/// Jacobian of the tendency at `s`, applied to `v`.
fn tendency_tlm(s: &StateVector, v: &Vector) -> Vector {
    let n = s.len();
    Vector::from_fn(n, |j, _| {
        let j = j as isize;
        let (jm2, jm1, jp1) = (wrap(j - 2, n), wrap(j - 1, n), wrap(j + 1, n));
        (v[jp1] - v[jm2]) * s[jm1] + (s[jp1] - s[jm2]) * v[jm1] - v[j as usize]
    })
}

/// Transpose of [`tendency_tlm`].
fn tendency_adjoint(s: &StateVector, w: &Vector) -> Vector {
    let n = s.len();
    Vector::from_fn(n, |i, _| {
        let i = i as isize;
        let at = |k: isize| wrap(i + k, n);
        s[at(-2)] * w[at(-1)] - s[at(1)] * w[at(2)] + (s[at(2)] - s[at(-1)]) * w[at(1)]
            - w[i as usize]
    })
}

/// Stage inputs of one RK4 step: `x`, `x + dt/2 k1`, `x + dt/2 k2`, `x + dt k3`.
fn rk4_stages(x: &StateVector, dt: f64, forcing: f64) -> ([StateVector; 4], StateVector) {
    let k1 = tendency_unchecked(x, forcing);
    let s2 = x + &k1 * (0.5 * dt);
    let k2 = tendency_unchecked(&s2, forcing);
    let s3 = x + &k2 * (0.5 * dt);
    let k3 = tendency_unchecked(&s3, forcing);
    let s4 = x + &k3 * dt;
    let k4 = tendency_unchecked(&s4, forcing);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    ([x.clone(), s2, s3, s4], next)
}

pub fn rk4_step(x: &StateVector, dt: f64, forcing: f64) -> Result<StateVector> {
    check_state_size(x.len())?;
    Ok(rk4_stages(x, dt, forcing).1)
}

/// Nonlinear trajectory together with every RK4 stage input, which is all the
/// linearization needs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    stages: Vec<[StateVector; 4]>,
    pub dt: f64,
    pub forcing: f64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn initial(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory holds at least x0")
    }

    fn step_tlm(&self, step: usize, dx: &Vector) -> Vector {
        let [s1, s2, s3, s4] = &self.stages[step];
        let dt = self.dt;
        let dk1 = tendency_tlm(s1, dx);
        let dk2 = tendency_tlm(s2, &(dx + &dk1 * (0.5 * dt)));
        let dk3 = tendency_tlm(s3, &(dx + &dk2 * (0.5 * dt)));
        let dk4 = tendency_tlm(s4, &(dx + &dk3 * dt));
        dx + (dk1 + dk2 * 2.0 + dk3 * 2.0 + dk4) * (dt / 6.0)
    }

    fn step_adjoint(&self, step: usize, a_next: &Vector) -> Vector {
        let [s1, s2, s3, s4] = &self.stages[step];
        let dt = self.dt;
        let mut a_x = a_next.clone();
        let a_k4 = a_next * (dt / 6.0);
        let mut a_k3 = a_next * (dt / 3.0);
        let mut a_k2 = a_next * (dt / 3.0);
        let mut a_k1 = a_next * (dt / 6.0);

        let a_s4 = tendency_adjoint(s4, &a_k4);
        a_x += &a_s4;
        a_k3.axpy(dt, &a_s4, 1.0);

        let a_s3 = tendency_adjoint(s3, &a_k3);
        a_x += &a_s3;
        a_k2.axpy(0.5 * dt, &a_s3, 1.0);

        let a_s2 = tendency_adjoint(s2, &a_k2);
        a_x += &a_s2;
        a_k1.axpy(0.5 * dt, &a_s2, 1.0);

        a_x += tendency_adjoint(s1, &a_k1);
        a_x
    }
}

/// Integrates `x0` for `cfg.n_steps` steps, storing every state and stage.
pub fn integrate(x0: &StateVector, cfg: &ModelConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_len("integrate initial state", cfg.n, x0.len())?;
    if let Some(index) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: 0, index });
    }
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    let mut stages = Vec::with_capacity(cfg.n_steps);
    states.push(x0.clone());
    for step in 0..cfg.n_steps {
        let (stage, next) = rk4_stages(&states[step], cfg.dt, cfg.forcing);
        if let Some(index) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                index,
            });
        }
        stages.push(stage);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        stages,
        dt: cfg.dt,
        forcing: cfg.forcing,
    })
}

/// Free run without storing the trajectory; returns the final state.
pub fn forecast(x0: &StateVector, cfg: &ModelConfig, n_steps: usize) -> Result<StateVector> {
    cfg.validate()?;
    check_len("forecast initial state", cfg.n, x0.len())?;
    let mut x = x0.clone();
    for step in 0..n_steps {
        x = rk4_stages(&x, cfg.dt, cfg.forcing).1;
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                index,
            });
        }
    }
    Ok(x)
}

/// Tangent-linear propagation over the full window; element `t` is the
/// perturbation after `t` steps.
pub fn tlm_apply(traj: &Trajectory, dx0: &Vector) -> Result<Vec<Vector>> {
    tlm_apply_steps(traj, dx0, traj.n_steps())
}

/// Tangent-linear propagation over the first `steps` steps of the window.
pub fn tlm_apply_steps(traj: &Trajectory, dx0: &Vector, steps: usize) -> Result<Vec<Vector>> {
    check_len("tlm perturbation", traj.dim(), dx0.len())?;
    if steps > traj.n_steps() {
        return Err(Error::Config(format!(
            "requested {steps} TLM steps but trajectory has {}",
            traj.n_steps()
        )));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(dx0.clone());
    for step in 0..steps {
        let next = traj.step_tlm(step, &out[step]);
        out.push(next);
    }
    Ok(out)
}

/// Transpose of [`tlm_apply_steps`]: returns `Σ_t M_{0→t}ᵀ w_t` where
/// `w_steps[t]` is the forcing at step `t`. The window length is
/// `w_steps.len() - 1`.
pub fn adjoint_apply(traj: &Trajectory, w_steps: &[Vector]) -> Result<Vector> {
    let Some((last, rest)) = w_steps.split_last() else {
        return Err(Error::Config(
            "adjoint needs at least one forcing vector".into(),
        ));
    };
    let steps = rest.len();
    if steps > traj.n_steps() {
        return Err(Error::Config(format!(
            "adjoint window of {steps} steps exceeds trajectory of {}",
            traj.n_steps()
        )));
    }
    for w in w_steps {
        check_len("adjoint forcing", traj.dim(), w.len())?;
    }
    let mut a = last.clone();
    for step in (0..steps).rev() {
        a = traj.step_adjoint(step, &a);
        a += &w_steps[step];
    }
    Ok(a)
}
