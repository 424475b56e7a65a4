//! A priori estimates asserted on a solve result: mass conservation and
//! positivity, the energy identity, the control-moment bound, the maximum
//! principle, the small-parameter condition, and two stability probes whose
//! constants are not known explicitly (gradient/value ratio, measure
//! distance). Every check returns the measured quantity; the report collects
//! them with pass/fail margins.

use crate::coupler::SolveResult;
use crate::grid::{gradient_centered, integrate, ScalarField, TimeGrid};
use crate::models::{JointMeasure, Model, ModelError};
use crate::mufix::{lambda_moment, solve_mu, MuFixError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MuFix(#[from] MuFixError),
}

/// Measured a priori quantities of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// max_t |integral m(t) - 1|.
    pub mass_max_dev: f64,
    /// min over all nodes and slices of m.
    pub m_min: f64,
    /// |LHS - RHS| of the duality energy identity.
    pub energy_identity_residual: f64,
    /// min over t of (moment-bound RHS - Lambda_inf(mu_t)); negative => fail.
    pub lambda_bound_margin: f64,
    /// sup_t ||grad u(t)||_inf / (1 + max_{s >= t} ||u(s)||_inf).
    pub grad_value_ratio: f64,
    /// Maximum-principle bound margin RHS - ||u||_inf at theta = 1/2.
    pub max_principle_margin: f64,
    /// Small-parameter condition: flag and both sides.
    pub small_param_ok: bool,
    pub small_param_lhs: f64,
    pub small_param_rhs: f64,
    /// Margin of the integral maximum-principle bound (the value bound
    /// through the control-energy integral); computed only when q0 <= q'.
    pub integral_max_principle_margin: Option<f64>,
    /// Margin of the duality bound on the control-energy integral
    /// int int |grad u|^q dm dt; computed only when q0 <= q' and the theta =
    /// 1/2 absorption factor is positive.
    pub energy_bound_margin: Option<f64>,
    /// All hard margins nonnegative (mass, positivity, moment bound, maximum
    /// principle). The small-parameter flag describes the model's existence
    /// regime, not the computed run, and does not gate verification.
    pub verified: bool,
}

/// Mass deviation and density minimum over the whole trajectory.
pub fn check_mass_and_positivity(result: &SolveResult) -> (f64, f64) {
    let mut dev: f64 = 0.0;
    let mut m_min = f64::INFINITY;
    for m in &result.m_traj {
        dev = dev.max((integrate(m) - 1.0).abs());
        m_min = m_min.min(m.min());
    }
    (dev, m_min)
}

/// Residual of the duality identity
/// int_0^T int [H_p . grad u - H] dm dt = int u(0) dm0 - int g(., m(T)) dm(T),
/// evaluated with the run's own quadrature, gradient and measures.
pub fn energy_identity_residual(
    result: &SolveResult,
    model: &Model,
    tgrid: &TimeGrid,
) -> Result<f64, DiagnosticsError> {
    let nt = tgrid.nt();
    let dt = tgrid.dt();
    let grid = model.grid();
    let h = grid.h();
    let n = grid.n();

    let mut lhs = 0.0;
    for k in 0..nt {
        let p = gradient_centered(&result.u_traj[k]);
        let mu = JointMeasure::new(result.m_traj[k].clone(), result.alpha_traj[k].clone())?;
        let agg = model.aggregates(&mu)?;
        let mut slice = 0.0;
        for i in 0..n {
            let hp = model.hamiltonian_p(i, p[i], &agg)?;
            let hv = model.hamiltonian(i, p[i], &agg)?;
            slice += (hp * p[i] - hv) * result.m_traj[k][i];
        }
        lhs += slice * h * dt;
    }

    let m_t = &result.m_traj[nt];
    let g_t = model.terminal_cost(m_t);
    let mut rhs = 0.0;
    for i in 0..n {
        rhs += result.u_traj[0][i] * result.m_traj[0][i] - g_t[i] * m_t[i];
    }
    rhs *= h;
    Ok((lhs - rhs).abs())
}

/// Margin of the control-moment bound at q~ = infinity:
/// Lambda_inf(mu_t) <= c0/(1-lambda0) (1 + || |p|^{q-1} ||_{L^inf(m)}).
pub fn check_lambda_bound(result: &SolveResult, model: &Model) -> Result<f64, DiagnosticsError> {
    let c = model.constants();
    let mut margin = f64::INFINITY;
    for (k, u) in result.u_traj.iter().enumerate() {
        let p = gradient_centered(u);
        let m = &result.m_traj[k];
        let alpha = &result.alpha_traj[k];
        let mut p_sup: f64 = 0.0;
        for i in 0..p.len() {
            if m[i] > crate::models::SUPPORT_FLOOR {
                p_sup = p_sup.max(p[i].abs());
            }
        }
        let rhs = c.c0 / (1.0 - c.lambda0) * (1.0 + p_sup.powf(c.q - 1.0));
        let lhs = lambda_moment(m, alpha, f64::INFINITY);
        margin = margin.min(rhs - lhs);
    }
    Ok(margin)
}

/// Margin of the maximum-principle bound at theta = 1/2:
/// ||u||_inf <= g_bound + c0 T + lambda2 c0^{q'}/(1-lambda0)^{q'}
///             (theta^{1-q'} T + (1-theta)^{1-q'} ||grad u||_inf^q),
/// the terminal-cost and running-growth constants entering separately.
pub fn check_max_principle(
    result: &SolveResult,
    model: &Model,
    tgrid: &TimeGrid,
) -> Result<f64, DiagnosticsError> {
    let c = model.constants();
    if !c.lambda2.is_finite() {
        return Err(DiagnosticsError::Model(ModelError::MissingConstants(
            "lambda2",
        )));
    }
    let qp = c.q_prime();
    let theta: f64 = 0.5;
    let t_final = tgrid.t_final();
    let u_sup = result
        .u_traj
        .iter()
        .fold(0.0_f64, |a, u| a.max(u.sup_norm()));
    let grad_sup = result
        .u_traj
        .iter()
        .fold(0.0_f64, |a, u| a.max(gradient_centered(u).sup_norm()));
    let rhs = c.g_bound
        + c.c0 * t_final
        + c.lambda2 * c.c0.powf(qp) / (1.0 - c.lambda0).powf(qp)
            * (theta.powf(1.0 - qp) * t_final + (1.0 - theta).powf(1.0 - qp) * grad_sup.powf(c.q));
    Ok(rhs - u_sup)
}

/// Control-energy integral int_0^T int |grad u|^q dm dt with the run's own
/// quadrature.
pub fn control_energy_integral(result: &SolveResult, model: &Model, tgrid: &TimeGrid) -> f64 {
    let q = model.constants().q;
    let dt = tgrid.dt();
    let h = model.grid().h();
    let mut total = 0.0;
    for k in 0..tgrid.nt() {
        let p = gradient_centered(&result.u_traj[k]);
        let mut slice = 0.0;
        for i in 0..p.len() {
            slice += p[i].abs().powf(q) * result.m_traj[k][i];
        }
        total += slice * h * dt;
    }
    total
}

/// The two integral estimates available when q0 <= q': the value bound
/// through the control-energy integral, and the duality bound on that
/// integral itself. Both at theta = 1/2; `None` when q0 > q' or when the
/// absorption factor of the second bound is not positive.
pub fn integral_estimates(
    result: &SolveResult,
    model: &Model,
    tgrid: &TimeGrid,
) -> (Option<f64>, Option<f64>) {
    let c = model.constants();
    let qp = c.q_prime();
    if !(c.q0 <= qp) {
        return (None, None);
    }
    let theta: f64 = 0.5;
    let t_final = tgrid.t_final();
    let energy = control_energy_integral(result, model, tgrid);
    let u_sup = result
        .u_traj
        .iter()
        .fold(0.0_f64, |a, u| a.max(u.sup_norm()));

    let moment_factor = c.c0.powf(qp) / (1.0 - c.lambda0).powf(qp);
    let int_mp_rhs = c.g_bound
        + c.c0 * t_final
        + c.lambda2
            * moment_factor
            * (theta.powf(1.0 - qp) * t_final + (1.0 - theta).powf(1.0 - qp) * energy);
    let int_mp_margin = Some(int_mp_rhs - u_sup);

    // duality bound: c0d^{-1} E <= ||u|| + g_bound + c0d T + c0d^{-1} l1 int(moment^{q'})
    let absorb = 1.0 - c.lambda1 * moment_factor * (1.0 - theta).powf(1.0 - qp);
    let energy_margin = if absorb > 0.0 {
        let rhs = (c.c0_dual * (u_sup + c.g_bound + c.c0_dual * t_final)
            + c.lambda1 * moment_factor * theta.powf(1.0 - qp) * t_final)
            / absorb;
        Some(rhs - energy)
    } else {
        None
    };
    (int_mp_margin, energy_margin)
}

/// Both sides of the small-parameter condition
/// lambda1 + c0_dual lambda2 < (1 - lambda0)^{q'} / c0^{q'}.
/// The left c0 is the duality constant, the right one the growth constant.
pub fn small_param_check(model: &Model) -> Result<(bool, f64, f64), DiagnosticsError> {
    let c = model.constants();
    if !c.lambda2.is_finite() {
        return Err(DiagnosticsError::Model(ModelError::MissingConstants(
            "lambda2",
        )));
    }
    let qp = c.q_prime();
    let lhs = c.lambda1 + c.c0_dual * c.lambda2;
    let rhs = (1.0 - c.lambda0).powf(qp) / c.c0.powf(qp);
    Ok((lhs < rhs, lhs, rhs))
}

/// sup_t ||grad u(t)||_inf / (1 + max_{s >= t} ||u(s)||_inf). The constant of
/// the underlying gradient bound is unknown; the suite only asserts stability
/// of this ratio under refinement.
pub fn grad_value_ratio(result: &SolveResult) -> f64 {
    let nt = result.u_traj.len();
    let mut tail_sup = vec![0.0_f64; nt];
    let mut running: f64 = 0.0;
    for k in (0..nt).rev() {
        running = running.max(result.u_traj[k].sup_norm());
        tail_sup[k] = running;
    }
    let mut ratio: f64 = 0.0;
    for (u, tail) in result.u_traj.iter().zip(&tail_sup) {
        let g = gradient_centered(u).sup_norm();
        ratio = ratio.max(g / (1.0 + tail));
    }
    ratio
}

/// Measure-map stability probe: distance of two slice fixed points against
/// the Hoelder combination of the data distances. The constant is unknown;
/// callers assert boundedness of lhs/rhs across a perturbation family.
#[allow(clippy::too_many_arguments)]
pub fn mu_stability_probe(
    model: &Model,
    p1: &ScalarField,
    m1: &ScalarField,
    p2: &ScalarField,
    m2: &ScalarField,
    m_cap: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), DiagnosticsError> {
    let (a1, _) = solve_mu(model, p1, m1, m_cap, tol, max_iter)?;
    let (a2, _) = solve_mu(model, p2, m2, m_cap, tol, max_iter)?;
    let lhs = a1.sup_distance(a2.as_scalar());
    let beta0 = model.constants().beta0;
    let rhs = p1.sup_distance(p2).powf(beta0) + m1.sup_distance(m2).powf(beta0);
    Ok((lhs, rhs))
}

/// Runs every check and assembles the report.
pub fn run_all(
    result: &SolveResult,
    model: &Model,
    tgrid: &TimeGrid,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    let (mass_max_dev, m_min) = check_mass_and_positivity(result);
    let energy = energy_identity_residual(result, model, tgrid)?;
    let lambda_margin = check_lambda_bound(result, model)?;
    let max_principle_margin = check_max_principle(result, model, tgrid)?;
    let (small_ok, lhs, rhs) = small_param_check(model)?;
    let ratio = grad_value_ratio(result);
    let (integral_mp, energy_bound) = integral_estimates(result, model, tgrid);
    let verified =
        mass_max_dev <= 1e-12 && m_min > 0.0 && lambda_margin >= 0.0 && max_principle_margin >= 0.0;
    Ok(DiagnosticsReport {
        mass_max_dev,
        m_min,
        energy_identity_residual: energy,
        lambda_bound_margin: lambda_margin,
        grad_value_ratio: ratio,
        max_principle_margin,
        small_param_ok: small_ok,
        small_param_lhs: lhs,
        small_param_rhs: rhs,
        integral_max_principle_margin: integral_mp,
        energy_bound_margin: energy_bound,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupler::{solve, SolverConfig};
    use crate::grid::TorusGrid;
    use crate::models::{CrowdMotion, FieldSpec, KernelSpec, LinearDemand, Model};

    const TAU: f64 = std::f64::consts::TAU;

    fn linear_run(
        n: usize,
        nt: usize,
        t_final: f64,
    ) -> (Model, TimeGrid, crate::coupler::SolveResult) {
        let g = TorusGrid::new(n).unwrap();
        let model =
            Model::LinearDemand(LinearDemand::new(g, 1.0, FieldSpec::cosine(1, 0.3), 0.0).unwrap());
        let tg = TimeGrid::new(t_final, nt).unwrap();
        let m0 = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (TAU * x).cos());
        let r = solve(&model, &tg, &m0, &SolverConfig::new(0.05)).unwrap();
        assert!(r.converged);
        (model, tg, r)
    }

    #[test]
    fn zero_solution_has_zero_energy_residual_and_ratio() {
        let g = TorusGrid::new(32).unwrap();
        let model = Model::CrowdMotion(
            CrowdMotion::new(
                g,
                0.5,
                0.5,
                2.0,
                2.0,
                2.0,
                KernelSpec::Constant { value: 1.0 },
                FieldSpec::zero(),
                FieldSpec::zero(),
                0.0,
            )
            .unwrap(),
        );
        let tg = TimeGrid::new(0.2, 32).unwrap();
        let m0 = ScalarField::from_fn(g, |x| 1.0 + 0.4 * (TAU * x).sin());
        let r = solve(&model, &tg, &m0, &SolverConfig::new(0.1)).unwrap();
        let report = run_all(&r, &model, &tg).unwrap();
        assert!(report.energy_identity_residual < 1e-12);
        assert!(report.grad_value_ratio < 1e-12);
        assert!(report.mass_max_dev <= 1e-12);
        assert!(report.m_min > 0.0);
        assert!(report.verified);
        // zero solution: maximum-principle RHS >= c0 > 0 = ||u||
        assert!(report.max_principle_margin > 0.0);
    }

    #[test]
    fn corrupted_density_reports_mass_deviation() {
        let (_, _, mut r) = linear_run(32, 32, 0.2);
        r.m_traj[5][3] += 1e-3;
        let (dev, _) = check_mass_and_positivity(&r);
        assert!(dev > 1e-5);
    }

    #[test]
    fn converged_linear_run_is_verified() {
        let (model, tg, r) = linear_run(64, 128, 0.5);
        let report = run_all(&r, &model, &tg).unwrap();
        assert!(report.verified, "report: {report:?}");
        assert!(report.small_param_ok);
        assert!((report.small_param_lhs - 1.0).abs() < 1e-12);
        assert!((report.small_param_rhs - 2.25).abs() < 1e-12);
        assert!(report.lambda_bound_margin >= 0.0);
        assert!(report.max_principle_margin >= 0.0);
    }

    #[test]
    fn energy_residual_much_larger_before_convergence() {
        let g = TorusGrid::new(64).unwrap();
        let model =
            Model::LinearDemand(LinearDemand::new(g, 1.0, FieldSpec::cosine(1, 0.3), 0.0).unwrap());
        let tg = TimeGrid::new(0.5, 64).unwrap();
        let m0 = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (TAU * x).cos());
        let mut config = SolverConfig::new(0.05);
        let full = solve(&model, &tg, &m0, &config).unwrap();
        config.max_outer = 2;
        let partial = solve(&model, &tg, &m0, &config).unwrap();
        assert!(!partial.converged);
        let e_full = energy_identity_residual(&full, &model, &tg).unwrap();
        let e_partial = energy_identity_residual(&partial, &model, &tg).unwrap();
        assert!(
            e_partial >= 5.0 * e_full,
            "partial {e_partial} vs converged {e_full}"
        );
    }

    #[test]
    fn understated_constant_fails_max_principle() {
        let (model, tg, r) = linear_run(32, 48, 0.4);
        let margin = check_max_principle(&r, &model, &tg).unwrap();
        assert!(margin > 0.0);
        // fault injection: an understated c0 (with lambda2 = 0 the bound
        // degenerates to c0 (1 + T)) must produce a negative margin
        let understated_rhs = 1e-4 * (1.0 + tg.t_final());
        let u_sup = r.u_traj.iter().fold(0.0_f64, |a, u| a.max(u.sup_norm()));
        assert!(understated_rhs - u_sup < 0.0);
    }

    #[test]
    fn small_param_fixture_flags() {
        let g = TorusGrid::new(16).unwrap();
        let model = Model::LinearDemand(LinearDemand::new(g, 1.0, FieldSpec::zero(), 0.0).unwrap());
        let (ok, lhs, rhs) = small_param_check(&model).unwrap();
        assert!(ok && lhs < rhs);

        // a large lambda2 flips the flag
        let mut big_l2 = model.clone();
        let mut c = *big_l2.constants();
        c.lambda2 = 100.0;
        big_l2.override_constants(c).unwrap();
        let (ok, _, _) = small_param_check(&big_l2).unwrap();
        assert!(!ok);

        // lambda0 near 1 sends the right side toward zero
        let mut near_one = model.clone();
        let mut c = *near_one.constants();
        c.lambda0 = 0.999;
        c.lambda1 = 0.0;
        c.lambda2 = 1.0;
        near_one.override_constants(c).unwrap();
        let (ok, _, rhs) = small_param_check(&near_one).unwrap();
        assert!(!ok && rhs < 1e-5);
    }

    #[test]
    fn mu_probe_zero_for_identical_data_and_continuous_in_shift() {
        let g = TorusGrid::new(48).unwrap();
        let model = Model::LinearDemand(LinearDemand::new(g, 1.0, FieldSpec::zero(), 0.0).unwrap());
        let p = ScalarField::from_fn(g, |x| 0.4 * (TAU * x).cos());
        let m = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (TAU * x).sin());
        let (lhs, _) =
            mu_stability_probe(&model, &p, &m, &p, &m, f64::INFINITY, 1e-13, 300).unwrap();
        assert!(lhs < 1e-12);

        // shrinking constant shifts: lhs decreases to zero, and for the
        // linear model the response to a constant shift has a closed form:
        // alpha(x) = -(p(x) + w abar - r)/2 with abar = (r - pbar)/(2 + w)
        // gives |a1 - a2| = delta/(2 + w) exactly.
        let mut prev = f64::INFINITY;
        for delta in [0.4, 0.2, 0.1, 0.05] {
            let p2 = ScalarField::from_fn(g, |x| 0.4 * (TAU * x).cos() + delta);
            let (lhs, _) =
                mu_stability_probe(&model, &p, &m, &p2, &m, f64::INFINITY, 1e-13, 300).unwrap();
            let w: f64 = 0.5;
            let closed = delta / (2.0 + w);
            assert!((lhs - closed).abs() < 1e-9, "lhs {lhs} vs {closed}");
            assert!(lhs < prev);
            prev = lhs;
        }
    }
}
