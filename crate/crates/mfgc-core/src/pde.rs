//! One backward HJB step and one forward FPK step on the torus, plus full
//! sweeps. Diffusion is implicit (periodic tridiagonal solves), the
//! Hamiltonian and advection terms explicit. The FPK advection uses a
//! donor-cell upwind flux in conservative form, so the discrete mass
//! telescopes exactly and positivity holds under max|b| dt/h <= 1.

use crate::grid::{
    gradient_centered, gradient_one_sided, periodic_tridiag_solve, ControlField, GridError,
    ScalarField, TimeGrid,
};
use crate::models::{Aggregates, JointMeasure, Model, ModelError};
use crate::mufix::{solve_mu, MuFixError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("advection CFL violated: max|b| dt/h = {ratio:.3} > 1 (drift {max_drift:.3e})")]
    CflViolation { ratio: f64, max_drift: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MuFix(#[from] MuFixError),
}

/// Spatial discretization of the Hamiltonian gradient argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Advection {
    /// Centered gradient; pairs with the conservative FPK stencil so the
    /// discrete energy identity telescopes.
    #[default]
    Centered,
    /// Gradient biased against the characteristic direction of H_p.
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Diffusion coefficient nu > 0.
    pub nu: f64,
    pub advection: Advection,
    /// When set, forward steps reject drifts that break the positivity CFL.
    pub cfl_guard: bool,
}

impl SchemeConfig {
    pub fn new(nu: f64) -> Self {
        assert!(nu > 0.0, "diffusion coefficient must be positive");
        Self {
            nu,
            advection: Advection::Centered,
            cfl_guard: true,
        }
    }
}

/// One backward step of the value function: solves
/// (I + nu dt (-Lap_h)) u = u_next - dt H(x, D_h u_next, mu)
/// where mu (through `agg`) is the measure slice at the target time level.
pub fn hjb_step_backward(
    u_next: &ScalarField,
    agg: &Aggregates,
    model: &Model,
    scheme: &SchemeConfig,
    dt: f64,
) -> Result<ScalarField, PdeError> {
    assert!(dt > 0.0);
    let grid = u_next.grid();
    let n = grid.n();
    let h = grid.h();
    let s = scheme.nu * dt / (h * h);

    let grad = gradient_centered(u_next);
    let mut rhs = vec![0.0; n];
    match scheme.advection {
        Advection::Centered => {
            for (i, slot) in rhs.iter_mut().enumerate() {
                *slot = u_next[i] - dt * model.hamiltonian(i, grad[i], agg)?;
            }
        }
        Advection::Upwind => {
            let (bwd, fwd) = gradient_one_sided(u_next);
            for (i, slot) in rhs.iter_mut().enumerate() {
                // bias the gradient against the characteristic direction
                let speed = model.hamiltonian_p(i, grad[i], agg)?;
                let p = if speed > 0.0 { bwd[i] } else { fwd[i] };
                *slot = u_next[i] - dt * model.hamiltonian(i, p, agg)?;
            }
        }
    }
    let rhs = ScalarField::new(grid, rhs);
    // diag = 1 + 2s > 2|off| = 2s always: the solve cannot reject.
    Ok(periodic_tridiag_solve(1.0 + 2.0 * s, -s, &rhs)?)
}

/// Donor-cell upwind face flux of b m: flux[i] approximates (b m) at the
/// face between node i and node i+1.
fn upwind_face_flux(m: &ScalarField, drift: &ControlField) -> Vec<f64> {
    let n = m.len();
    let mut flux = vec![0.0; n];
    for (i, slot) in flux.iter_mut().enumerate() {
        let j = if i + 1 == n { 0 } else { i + 1 };
        *slot = drift[i].max(0.0) * m[i] + drift[j].min(0.0) * m[j];
    }
    flux
}

/// One forward step of the density in conservative form: explicit upwind
/// advection with drift b (= -H_p at the slice), then implicit diffusion.
/// Mass is conserved to round-off for any drift.
pub fn fpk_step_forward(
    m_now: &ScalarField,
    drift: &ControlField,
    scheme: &SchemeConfig,
    dt: f64,
) -> Result<ScalarField, PdeError> {
    assert!(dt > 0.0);
    let grid = m_now.grid();
    let n = grid.n();
    let h = grid.h();
    if scheme.cfl_guard {
        let max_drift = drift.sup_norm();
        let ratio = max_drift * dt / h;
        if ratio > 1.0 {
            return Err(PdeError::CflViolation { ratio, max_drift });
        }
    }
    let flux = upwind_face_flux(m_now, drift);
    let mut rhs = vec![0.0; n];
    for (i, slot) in rhs.iter_mut().enumerate() {
        let im = if i == 0 { n - 1 } else { i - 1 };
        *slot = m_now[i] - dt / h * (flux[i] - flux[im]);
    }
    let rhs = ScalarField::new(grid, rhs);
    let s = scheme.nu * dt / (h * h);
    Ok(periodic_tridiag_solve(1.0 + 2.0 * s, -s, &rhs)?)
}

/// Backward sweep: u(T) = g(., m_T), then one step per slice using the
/// frozen measure trajectory (mu_traj must hold nt + 1 slices).
pub fn solve_hjb_backward(
    mu_traj: &[JointMeasure],
    m_terminal: &ScalarField,
    model: &Model,
    scheme: &SchemeConfig,
    tgrid: &TimeGrid,
) -> Result<Vec<ScalarField>, PdeError> {
    let nt = tgrid.nt();
    assert_eq!(mu_traj.len(), nt + 1, "need nt + 1 measure slices");
    let dt = tgrid.dt();
    let mut u = vec![ScalarField::zeros(model.grid()); nt + 1];
    u[nt] = model.terminal_cost(m_terminal);
    for k in (0..nt).rev() {
        let agg = model.aggregates(&mu_traj[k])?;
        u[k] = hjb_step_backward(&u[k + 1], &agg, model, scheme, dt)?;
    }
    Ok(u)
}

/// Forward sweep: marches the density from m0, resolving the measure fixed
/// point on every slice from the frozen u trajectory. Returns the density
/// trajectory and the per-slice joint measures (both nt + 1 slices).
#[allow(clippy::too_many_arguments)]
pub fn solve_fpk_forward(
    u_traj: &[ScalarField],
    model: &Model,
    scheme: &SchemeConfig,
    tgrid: &TimeGrid,
    m0: &ScalarField,
    m_cap: f64,
    tol_mu: f64,
    max_mu: usize,
) -> Result<(Vec<ScalarField>, Vec<JointMeasure>), PdeError> {
    let nt = tgrid.nt();
    assert_eq!(u_traj.len(), nt + 1, "need nt + 1 value slices");
    let dt = tgrid.dt();
    let mut m_traj = Vec::with_capacity(nt + 1);
    let mut mu_traj = Vec::with_capacity(nt + 1);
    let mut m = m0.clone();
    for (k, u_slice) in u_traj.iter().enumerate() {
        let p = gradient_centered(u_slice);
        let (alpha, _) = solve_mu(model, &p, &m, m_cap, tol_mu, max_mu)?;
        let mu = JointMeasure::new(m.clone(), alpha.clone())?;
        m_traj.push(m.clone());
        mu_traj.push(mu);
        if k < nt {
            m = fpk_step_forward(&m, &alpha, scheme, dt)?;
        }
    }
    Ok((m_traj, mu_traj))
}
