//! The fixed point defining the joint state-control measure on one time
//! slice: alpha = T_M(-H_p(., p(.), (Id, alpha)#m)), solved by Banach
//! iteration. The map is lambda0-Lipschitz, so for lambda0 < 1 the iteration
//! converges geometrically from any start; we start from alpha = 0.

use crate::grid::{ControlField, ScalarField};
use crate::models::{Model, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MuFixError {
    #[error(
        "measure fixed point did not converge: residual {residual:.3e} > tol {tol:.3e} \
         after {iterations} iterations with contraction estimate {contraction_estimate:.3}"
    )]
    NoConvergence {
        residual: f64,
        tol: f64,
        iterations: usize,
        contraction_estimate: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Convergence record of one measure fixed-point solve.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MuSolveReport {
    pub iterations: usize,
    /// Sup norm of the last successive-iterate difference.
    pub final_residual: f64,
    pub converged: bool,
    /// Max observed ratio of successive residuals; only meaningful after at
    /// least two iterations.
    pub contraction_estimate: Option<f64>,
}

/// Radial projection onto the ball of radius `m_cap`; identity for
/// `m_cap = f64::INFINITY`. 1-Lipschitz.
pub fn truncate_tm(v: f64, m_cap: f64) -> f64 {
    debug_assert!(m_cap > 0.0);
    if v.abs() <= m_cap {
        v
    } else {
        m_cap * v.signum()
    }
}

/// Solves the truncated measure fixed point on one time slice.
///
/// `p_field` is the spatial gradient of u on the slice, `m` the density.
/// Returns the control field alpha with
/// sup_i |alpha_i - T_M(-H_p(x_i, p_i, (Id,alpha)#m))| <= tol (1+l0)/(1-l0).
pub fn solve_mu(
    model: &Model,
    p_field: &ScalarField,
    m: &ScalarField,
    m_cap: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(ControlField, MuSolveReport), MuFixError> {
    assert!(tol > 0.0 && m_cap > 0.0);
    let grid = p_field.grid();
    let n = grid.n();
    let mut alpha = ControlField::zeros(grid);
    let mut prev_residual: Option<f64> = None;
    let mut contraction_estimate: Option<f64> = None;
    let mut residual = f64::INFINITY;
    // density-only precomputation shared by all iterates
    let ctx = model.slice_context(m)?;

    for iter in 1..=max_iter {
        let agg = model.aggregates_in(m, &alpha, &ctx)?;
        let mut next = vec![0.0; n];
        let mut diff: f64 = 0.0;
        for (i, slot) in next.iter_mut().enumerate() {
            let hp = model.hamiltonian_p(i, p_field[i], &agg)?;
            *slot = truncate_tm(-hp, m_cap);
            diff = diff.max((*slot - alpha[i]).abs());
        }
        alpha = ControlField::new(grid, next);
        residual = diff;
        if let Some(prev) = prev_residual {
            if prev > 0.0 {
                let ratio = residual / prev;
                contraction_estimate =
                    Some(contraction_estimate.map_or(ratio, |c: f64| c.max(ratio)));
            }
        }
        prev_residual = Some(residual);
        if residual <= tol {
            return Ok((
                alpha,
                MuSolveReport {
                    iterations: iter,
                    final_residual: residual,
                    converged: true,
                    contraction_estimate,
                },
            ));
        }
    }

    let est = contraction_estimate.unwrap_or(f64::INFINITY);
    // Transient ratios above lambda0 can occur while the truncation switches
    // on and off; only a persistent non-contraction is an error.
    if est >= 1.0 {
        return Err(MuFixError::NoConvergence {
            residual,
            tol,
            iterations: max_iter,
            contraction_estimate: est,
        });
    }
    Ok((
        alpha,
        MuSolveReport {
            iterations: max_iter,
            final_residual: residual,
            converged: false,
            contraction_estimate,
        },
    ))
}

/// L^q-tilde(m) moment of the control component of a joint measure:
/// (sum_i |alpha_i|^qt m_i h)^{1/qt}; `qt = f64::INFINITY` takes the sup over
/// the support of m (nodes with mass above the support floor).
pub fn lambda_moment(m: &ScalarField, alpha: &ControlField, q_tilde: f64) -> f64 {
    assert!(q_tilde >= 1.0);
    if q_tilde.is_infinite() {
        let mut sup: f64 = 0.0;
        for (mi, ai) in m.values().iter().zip(alpha.values()) {
            if *mi > crate::models::SUPPORT_FLOOR {
                sup = sup.max(ai.abs());
            }
        }
        return sup;
    }
    let h = m.grid().h();
    let s: f64 = m
        .values()
        .iter()
        .zip(alpha.values())
        .map(|(mi, ai)| ai.abs().powf(q_tilde) * mi)
        .sum::<f64>()
        * h;
    s.powf(1.0 / q_tilde)
}

/// Closed-form fixed point for the models whose aggregate enters H_p
/// linearly (and, for the price impact model, through the quadratic moment
/// only); used as the test oracle for the Banach path. Untruncated (M = inf).
pub fn closed_form_mu(
    model: &Model,
    p_field: &ScalarField,
    m: &ScalarField,
) -> Option<ControlField> {
    let grid = p_field.grid();
    let h = grid.h();
    let p_bar: f64 = p_field
        .values()
        .iter()
        .zip(m.values())
        .map(|(p, mi)| p * mi)
        .sum::<f64>()
        * h;
    match model {
        Model::LinearDemand(md) => {
            // alpha = -(p + w abar - r)/2; integrating against m gives
            // abar (1 + w/2) = (r - pbar)/2.
            let w = md.coupling_weight();
            let r = md.intercept();
            let alpha_bar = 0.5 * (r - p_bar) / (1.0 + 0.5 * w);
            let values = p_field
                .values()
                .iter()
                .map(|p| -0.5 * (p + w * alpha_bar - r))
                .collect();
            Some(ControlField::new(grid, values))
        }
        Model::NegCorrResources(md) => {
            if md.matrix().len() != 1 {
                return None;
            }
            let mm = md.matrix()[0][0];
            // abar (1 + M/2) = -pbar/2
            let alpha_bar = -0.5 * p_bar / (1.0 + 0.5 * mm);
            let values = p_field
                .values()
                .iter()
                .map(|p| -0.5 * (p + mm * alpha_bar))
                .collect();
            Some(ControlField::new(grid, values))
        }
        Model::PriceImpact(md) => {
            // alpha = -(p + eps s) with s = Lambda_2(alpha) solving
            // s^2 (1 - eps^2) - 2 eps pbar s - p2 = 0 (nonnegative root).
            let eps = md.eps_tilde();
            let p2: f64 = p_field
                .values()
                .iter()
                .zip(m.values())
                .map(|(p, mi)| p * p * mi)
                .sum::<f64>()
                * h;
            let disc = eps * eps * p_bar * p_bar + (1.0 - eps * eps) * p2;
            let s = (eps * p_bar + disc.max(0.0).sqrt()) / (1.0 - eps * eps);
            let values = p_field.values().iter().map(|p| -(p + eps * s)).collect();
            Some(ControlField::new(grid, values))
        }
        _ => None,
    }
}
