//! Sampled falsification of the structural assumptions (convexity in p,
//! growth and contraction of H_p, growth of H and H_x, the convexity-duality
//! lower bound), plus the crowd-motion optimal-control machinery: the scalar
//! optimality equation, its explicit equal-exponent solution, the reduced
//! Hamiltonian, the 2x2 sensitivity-matrix eigenvalue check, and the
//! existence-regime classifier.

use crate::grid::{ControlField, ScalarField, TorusGrid};
use crate::models::{Model, ModelError};
use crate::mufix::lambda_moment;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error, PartialEq)]
pub enum AssumptionError {
    #[error("optimal-control solve did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
    #[error("parameters outside the stated domain: {0}")]
    DomainError(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One recorded violation: which sample broke the inequality and by how much.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub sample_index: usize,
    pub x: f64,
    pub p: f64,
    pub margin: f64,
    pub detail: String,
}

/// Worst margin and violation count of one assumption over the sample set.
/// Margins are "RHS - LHS": negative means the inequality failed.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub samples: usize,
    pub worst_margin: f64,
    pub violations: usize,
    pub first_violation: Option<Violation>,
}

impl AssumptionCheck {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: 0,
            worst_margin: f64::INFINITY,
            violations: 0,
            first_violation: None,
        }
    }

    fn record(&mut self, idx: usize, x: f64, p: f64, margin: f64, detail: &str) {
        self.samples += 1;
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if margin < 0.0 {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(Violation {
                    sample_index: idx,
                    x,
                    p,
                    margin,
                    detail: detail.to_string(),
                });
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub seed: u64,
    pub n_samples: usize,
    pub p_max: f64,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

/// Tunable sampling envelope. The declared model constants are derived for
/// fields within this envelope (control bound from the model, densities of
/// bounded log-oscillation).
#[derive(Debug, Clone, Copy)]
pub struct SampleConfig {
    pub p_max: f64,
    /// Override of the model's declared control bound, if set.
    pub alpha_max: Option<f64>,
    /// Small-margin slack for inequalities that hold with equality.
    pub slack: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            p_max: 10.0,
            alpha_max: None,
            slack: 1e-9,
        }
    }
}

/// Random trigonometric polynomial with at most 8 modes and coefficient mass
/// `amp`, so its sup norm is at most `amp`.
fn random_field(rng: &mut ChaCha8Rng, grid: TorusGrid, amp: f64) -> ScalarField {
    let modes = 8;
    let mut coefs = Vec::with_capacity(2 * modes);
    let mut mass = 0.0;
    for _ in 0..2 * modes {
        let c: f64 = rng.random_range(-1.0..1.0);
        mass += c.abs();
        coefs.push(c);
    }
    let scale = if mass > 0.0 {
        amp * rng.random_range(0.2..1.0) / mass
    } else {
        0.0
    };
    ScalarField::from_fn(grid, |x| {
        let mut v = 0.0;
        for k in 0..modes {
            v += coefs[2 * k] * (TAU * (k + 1) as f64 * x).cos()
                + coefs[2 * k + 1] * (TAU * (k + 1) as f64 * x).sin();
        }
        v * scale
    })
}

/// Random positive probability density exp(F)/int exp(F) with ||F|| <= 1,
/// hence bounded below by exp(-2).
fn random_density(rng: &mut ChaCha8Rng, grid: TorusGrid) -> ScalarField {
    let f = random_field(rng, grid, 1.0);
    let mut m = ScalarField::from_fn(grid, |_| 0.0);
    for i in 0..grid.n() {
        m[i] = f[i].exp();
    }
    let mass = crate::grid::integrate(&m);
    for i in 0..grid.n() {
        m[i] /= mass;
    }
    m
}

/// Hamiltonian at (x, p, mu), falling back to the numerical Legendre
/// transform for crowd exponents without a closed form.
fn h_at(
    model: &Model,
    x: f64,
    p: f64,
    m: &ScalarField,
    alpha: &ControlField,
) -> Result<f64, AssumptionError> {
    match model.hamiltonian_at(x, p, m, alpha) {
        Ok(v) => Ok(v),
        Err(ModelError::UnsupportedVariant(_)) => {
            let Model::CrowdMotion(cm) = model else {
                unreachable!("only crowd motion lacks closed forms");
            };
            let (a, b) = cm.exponents();
            let v = cm.average_drift_at(x, m, alpha)?;
            Ok(h_tilde(cm.theta(), cm.lambda_tilde(), a, b, p, v)? - cm.penalty_at(x))
        }
        Err(e) => Err(e.into()),
    }
}

/// dH/dp companion of [`h_at`]; the fallback is minus the optimal control.
fn hp_at(
    model: &Model,
    x: f64,
    p: f64,
    m: &ScalarField,
    alpha: &ControlField,
) -> Result<f64, AssumptionError> {
    match model.hamiltonian_p_at(x, p, m, alpha) {
        Ok(v) => Ok(v),
        Err(ModelError::UnsupportedVariant(_)) => {
            let Model::CrowdMotion(cm) = model else {
                unreachable!("only crowd motion lacks closed forms");
            };
            let (a, b) = cm.exponents();
            let v = cm.average_drift_at(x, m, alpha)?;
            Ok(-optimal_control(cm.theta(), cm.lambda_tilde(), a, b, p, v)?)
        }
        Err(e) => Err(e.into()),
    }
}

/// Samples (x, p, mu) tuples and checks every structural inequality against
/// the model's declared constants. Violations are recorded data, not errors.
pub fn verify_sampled(
    model: &Model,
    n_samples: usize,
    seed: u64,
    sample_config: &SampleConfig,
) -> Result<AssumptionReport, AssumptionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = model.grid();
    let c = model.constants();
    let qp = c.q_prime();
    let alpha_max = sample_config
        .alpha_max
        .unwrap_or_else(|| model.sampling_control_bound());
    let slack = sample_config.slack;

    let mut convexity = AssumptionCheck::new("A1-convexity");
    let mut fp1 = AssumptionCheck::new("FP1-hp-growth");
    let mut fp2 = AssumptionCheck::new("FP2-hp-contraction");
    let mut b1 = AssumptionCheck::new("B1-h0-growth");
    let mut b2 = AssumptionCheck::new("B2-hx-growth");
    let mut b3 = AssumptionCheck::new("B3-duality");
    let mut vbound = AssumptionCheck::new("V-bound");

    for idx in 0..n_samples {
        let m = random_density(&mut rng, grid);
        let alpha = ControlField::from_scalar(random_field(&mut rng, grid, alpha_max));
        let alpha2 = ControlField::from_scalar(random_field(&mut rng, grid, alpha_max));
        let node: usize = rng.random_range(0..grid.n());
        let x = grid.node(node);
        let p: f64 = rng.random_range(-sample_config.p_max..sample_config.p_max);
        let lam_q0 = lambda_moment(&m, &alpha, c.q0);

        let h = h_at(model, x, p, &m, &alpha)?;
        let hp = hp_at(model, x, p, &m, &alpha)?;

        // A1: convexity in p via a second difference
        let dp = 1e-3 * (1.0 + p.abs());
        let h_plus = h_at(model, x, p + dp, &m, &alpha)?;
        let h_minus = h_at(model, x, p - dp, &m, &alpha)?;
        convexity.record(
            idx,
            x,
            p,
            (h_plus - 2.0 * h + h_minus) / (dp * dp) + 1e-8,
            "second difference of H in p",
        );

        // FP1: |H_p| <= c0 (1 + |p|^{q-1}) + lambda0 Lambda_{q0}
        fp1.record(
            idx,
            x,
            p,
            c.c0 * (1.0 + p.abs().powf(c.q - 1.0)) + c.lambda0 * lam_q0 - hp.abs() + slack,
            "growth of H_p",
        );

        // FP2: |H_p(mu1) - H_p(mu2)| <= lambda0 ||a1 - a2||_{L^{q0}(m)}
        let hp2 = hp_at(model, x, p, &m, &alpha2)?;
        let diff_norm = {
            let grid2 = grid;
            let d: Vec<f64> = (0..grid2.n()).map(|i| alpha[i] - alpha2[i]).collect();
            lambda_moment(&m, &ControlField::new(grid2, d), c.q0)
        };
        fp2.record(
            idx,
            x,
            p,
            c.lambda0 * diff_norm - (hp - hp2).abs() + slack,
            "measure contraction of H_p",
        );

        // B1: |H(x, 0, mu)| <= c0 + lambda2 Lambda^{q'}
        let h0 = h_at(model, x, 0.0, &m, &alpha)?;
        b1.record(
            idx,
            x,
            0.0,
            c.c0 + c.lambda2 * lam_q0.powf(qp) - h0.abs() + slack,
            "growth of H at p = 0",
        );

        // B2: |H_x| <= c0 (1 + |p|^q + Lambda^{q'}), H_x by centered FD
        let dx = 1e-6;
        let hx = (h_at(model, x + dx, p, &m, &alpha)? - h_at(model, x - dx, p, &m, &alpha)?)
            / (2.0 * dx);
        b2.record(
            idx,
            x,
            p,
            c.c0 * (1.0 + p.abs().powf(c.q) + lam_q0.powf(qp)) - hx.abs() + 1e-4,
            "growth of H_x",
        );

        // B3: H_p p - H >= c0_dual^{-1} (|p|^q - lambda1 Lambda^{q'}) - c0_dual
        b3.record(
            idx,
            x,
            p,
            hp * p - h - (p.abs().powf(c.q) - c.lambda1 * lam_q0.powf(qp)) / c.c0_dual
                + c.c0_dual
                + slack,
            "convexity-duality lower bound",
        );

        // kernel models: the normalized drift is bounded by the moment
        if let Model::CrowdMotion(cm) = model {
            let agg = cm.aggregates(&m, &alpha)?;
            if let crate::models::Aggregates::KernelDrift { v } = &agg {
                vbound.record(
                    idx,
                    x,
                    p,
                    lam_q0 - v.sup_norm() + 1e-12,
                    "normalized drift bounded by control moment",
                );
            }
        }
    }

    let mut checks = vec![convexity, fp1, fp2, b1, b2, b3];
    if vbound.samples > 0 {
        checks.push(vbound);
    }
    Ok(AssumptionReport {
        model: model.name().to_string(),
        seed,
        n_samples,
        p_max: sample_config.p_max,
        checks,
    })
}

/// Deviation cost of the crowd-motion model:
/// Lt(alpha, v) = theta/a' |alpha - lt v|^{a'} + (1-theta)/b' |alpha|^{b'}.
pub fn deviation_cost(theta: f64, lt: f64, a: f64, b: f64, alpha: f64, v: f64) -> f64 {
    let ap = a / (a - 1.0);
    let bp = b / (b - 1.0);
    theta / ap * (alpha - lt * v).abs().powf(ap) + (1.0 - theta) / bp * alpha.abs().powf(bp)
}

/// signum(z) |z|^{e-1}, the derivative of |z|^e / e.
fn signed_power(z: f64, e: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.signum() * z.abs().powf(e - 1.0)
    }
}

/// Residual of the scalar optimality condition
/// p + theta |a - lt v|^{a'-2}(a - lt v) + (1-theta)|a|^{b'-2} a = 0.
fn optimality_residual(theta: f64, lt: f64, ap: f64, bp: f64, p: f64, v: f64, alpha: f64) -> f64 {
    p + theta * signed_power(alpha - lt * v, ap) + (1.0 - theta) * signed_power(alpha, bp)
}

/// Solves the optimality condition for the unique minimizing control.
/// Damped fixed-point first, bisection on the monotone scalar equation as
/// the fallback; residual below 1e-10 guaranteed on success.
pub fn optimal_control(
    theta: f64,
    lt: f64,
    a: f64,
    b: f64,
    p: f64,
    v: f64,
) -> Result<f64, AssumptionError> {
    if !(a >= 2.0 && b >= 2.0) {
        return Err(AssumptionError::DomainError(format!(
            "exponents must satisfy a, b >= 2 (got a = {a}, b = {b})"
        )));
    }
    if !(0.0 < theta && theta < 1.0) {
        return Err(AssumptionError::DomainError(format!(
            "theta must lie in (0, 1) for the two-term cost, got {theta}"
        )));
    }
    let ap = a / (a - 1.0);
    let bp = b / (b - 1.0);
    let tol = 1e-10;

    // damped fixed point on the explicit update
    let mut alpha = 0.0;
    for _ in 0..200 {
        let wa = theta * (alpha - lt * v).abs().powf(ap - 2.0);
        let wb = (1.0 - theta) * alpha.abs().powf(bp - 2.0);
        if wa.is_finite() && wb.is_finite() && wa + wb > 0.0 {
            let next = (-p + lt * wa * v) / (wa + wb);
            alpha = 0.5 * alpha + 0.5 * next;
        } else {
            break;
        }
        if optimality_residual(theta, lt, ap, bp, p, v, alpha).abs() <= tol {
            return Ok(alpha);
        }
    }

    // bisection: the optimality map is strictly increasing in alpha
    let radius = (1.0 - theta).recip() * p.abs().powf(b - 1.0)
        + theta.recip() * p.abs().powf(a - 1.0)
        + lt.abs() * v.abs()
        + 1.0;
    let mut lo = -radius;
    let mut hi = radius;
    let mut g_lo = optimality_residual(theta, lt, ap, bp, p, v, lo);
    let g_hi = optimality_residual(theta, lt, ap, bp, p, v, hi);
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(AssumptionError::NoConvergence {
            residual: g_lo.abs().min(g_hi.abs()),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = optimality_residual(theta, lt, ap, bp, p, v, mid);
        if g_mid.abs() <= tol {
            return Ok(mid);
        }
        if (g_lo <= 0.0) == (g_mid <= 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON * radius {
            break;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let residual = optimality_residual(theta, lt, ap, bp, p, v, alpha).abs();
    if residual <= tol {
        Ok(alpha)
    } else {
        Err(AssumptionError::NoConvergence { residual })
    }
}

/// Explicit optimal control at p = 0 for equal exponents a = b:
/// alpha = lt theta^{a-1} / (theta^{a-1} + (1-theta)^{a-1}) v.
pub fn optimal_control_equal_exponents(theta: f64, lt: f64, a: f64, v: f64) -> f64 {
    let w = theta.powf(a - 1.0);
    let w2 = (1.0 - theta).powf(a - 1.0);
    lt * w / (w + w2) * v
}

/// Reduced Hamiltonian Ht(p, v) = -alpha* p - Lt(alpha*, v).
pub fn h_tilde(
    theta: f64,
    lt: f64,
    a: f64,
    b: f64,
    p: f64,
    v: f64,
) -> Result<f64, AssumptionError> {
    if theta == 1.0 {
        // explicit power form
        return Ok(p.abs().powf(a) / a - lt * p * v);
    }
    let alpha = optimal_control(theta, lt, a, b, p, v)?;
    Ok(-alpha * p - deviation_cost(theta, lt, a, b, alpha, v))
}

/// Coefficient of -|v|^{a'} in Ht(0, v) for equal exponents:
/// (|lt|^{a'}/a') (theta (1-theta)^a + (1-theta) theta^a)
///               / ((1-theta)^{a-1} + theta^{a-1})^{a'}.
pub fn h_tilde_zero_coefficient(theta: f64, lt: f64, a: f64) -> f64 {
    let ap = a / (a - 1.0);
    lt.abs().powf(ap) / ap * (theta * (1.0 - theta).powf(a) + (1.0 - theta) * theta.powf(a))
        / ((1.0 - theta).powf(a - 1.0) + theta.powf(a - 1.0)).powf(ap)
}

/// Minimum eigenvalue of the 2x2 sensitivity matrix
/// M = I + k(BC + CB) + k^2 B C^2 B with B = U diag(1, r) U^T, C = diag(1, s),
/// via the explicit conjugated-matrix entries.
///
/// The source derivation claims this is never below 1 on
/// 0 < r <= 1 <= s, k > 0; that claim fails on part of the domain (see the
/// direct cross-check and the counterexample test), so callers must treat
/// values below 1 as meaningful output, not errors.
pub fn h4_min_eigenvalue(r: f64, s: f64, k: f64, chi: f64) -> Result<f64, AssumptionError> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(AssumptionError::DomainError(format!(
            "r must lie in (0, 1], got {r}"
        )));
    }
    if !(s >= 1.0) {
        return Err(AssumptionError::DomainError(format!(
            "s must be >= 1, got {s}"
        )));
    }
    if !(k > 0.0) {
        return Err(AssumptionError::DomainError(format!(
            "k must be positive, got {k}"
        )));
    }
    if !(0.0..TAU).contains(&chi) {
        return Err(AssumptionError::DomainError(format!(
            "chi must lie in [0, 2 pi), got {chi}"
        )));
    }
    let (c, si) = (chi.cos(), chi.sin());
    let m11 = c * c * (1.0 + k).powi(2) + si * si * (1.0 + k * s).powi(2);
    let m22 = c * c * (1.0 + k * r * s).powi(2) + si * si * (1.0 + k * r).powi(2);
    let m12 = -k * (s - 1.0) * (1.0 + r + k * r * (1.0 + s)) * c * si;
    Ok(symmetric_2x2_min_eig(m11, m12, m22))
}

/// Direct construction of the same matrix and its eigendecomposition; the
/// cross-check oracle for [`h4_min_eigenvalue`].
pub fn h4_min_eigenvalue_direct(r: f64, s: f64, k: f64, chi: f64) -> f64 {
    let (c, si) = (chi.cos(), chi.sin());
    let u = [[c, si], [-si, c]];
    // B = U diag(1, r) U^T
    let mut b = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            b[i][j] = u[i][0] * u[j][0] + r * u[i][1] * u[j][1];
        }
    }
    let cmat = [[1.0, 0.0], [0.0, s]];
    let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
        let mut z = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                z[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
            }
        }
        z
    };
    let bc = mul(b, cmat);
    let cb = mul(cmat, b);
    let bc2b = mul(mul(bc, cmat), b);
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] =
                if i == j { 1.0 } else { 0.0 } + k * (bc[i][j] + cb[i][j]) + k * k * bc2b[i][j];
        }
    }
    symmetric_2x2_min_eig(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
}

fn symmetric_2x2_min_eig(a11: f64, a12: f64, a22: f64) -> f64 {
    let half_tr = 0.5 * (a11 + a22);
    let disc = (0.5 * (a11 - a22)).hypot(a12);
    half_tr - disc
}

/// Outcome of a random sweep of the sensitivity-matrix eigenvalue bound.
#[derive(Debug, Clone, Serialize)]
pub struct H4SweepReport {
    pub samples: usize,
    pub min_eigenvalue: f64,
    /// Tuples whose minimum eigenvalue fell below 1 - 1e-10.
    pub below_one: usize,
    /// Max relative disagreement between the explicit formula and the direct
    /// eigendecomposition.
    pub max_path_disagreement: f64,
    /// Arguments of the smallest eigenvalue seen.
    pub witness: (f64, f64, f64, f64),
}

/// Sweeps `samples` random (r, s, k, chi) tuples over r in (0,1], s in
/// [1,10), k in (0,10), chi in [0, 2 pi), comparing the explicit and direct
/// eigenvalue paths and recording how far the claimed lower bound of 1 holds.
pub fn h4_random_sweep(samples: usize, seed: u64) -> H4SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_eig = f64::INFINITY;
    let mut below_one = 0usize;
    let mut max_diff = 0.0_f64;
    let mut witness = (1.0, 1.0, 1.0, 0.0);
    for _ in 0..samples {
        let r: f64 = rng.random_range(1e-6..=1.0);
        let s: f64 = rng.random_range(1.0..10.0);
        let k: f64 = rng.random_range(1e-6..10.0);
        let chi: f64 = rng.random_range(0.0..TAU);
        let e = h4_min_eigenvalue(r, s, k, chi).expect("sampled in range");
        let d = h4_min_eigenvalue_direct(r, s, k, chi);
        max_diff = max_diff.max((e - d).abs() / d.abs().max(1.0));
        if e < min_eig {
            min_eig = e;
            witness = (r, s, k, chi);
        }
        if e < 1.0 - 1e-10 {
            below_one += 1;
        }
    }
    H4SweepReport {
        samples,
        min_eigenvalue: min_eig,
        below_one,
        max_path_disagreement: max_diff,
        witness,
    }
}

/// Existence regimes of the crowd-motion model decidable from its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrowdExistenceCase {
    /// q0 <= q' and a != b.
    DistinctExponents,
    /// q0 <= q' and a = b with the deviation coefficient small enough.
    SmallCoefficient,
    /// theta = 1: pure deviation cost, explicit Hamiltonian.
    PureDeviation,
    /// Constant interaction kernel.
    ConstantKernel,
}

/// Classifies which parameter-decidable existence regimes apply. The
/// short-horizon regime depends on T and is not parameter-decidable here.
pub fn crowd_existence_region(
    theta: f64,
    lt: f64,
    a: f64,
    b: f64,
    q0: f64,
    kernel_is_constant: bool,
) -> Vec<CrowdExistenceCase> {
    let q = a.min(b);
    let qp = q / (q - 1.0);
    let mut cases = Vec::new();
    if q0 <= qp && a != b {
        cases.push(CrowdExistenceCase::DistinctExponents);
    }
    if q0 <= qp && a == b {
        // smallness: lambda1 = 0 and the H(x,0,mu) coefficient against the
        // canonical normalization c0 = 1, lambda0 = |lt|
        let coeff = h_tilde_zero_coefficient(theta, lt, a);
        let ap = a / (a - 1.0);
        if coeff < (1.0 - lt.abs()).powf(ap) {
            cases.push(CrowdExistenceCase::SmallCoefficient);
        }
    }
    if theta == 1.0 {
        cases.push(CrowdExistenceCase::PureDeviation);
    }
    if kernel_is_constant {
        cases.push(CrowdExistenceCase::ConstantKernel);
    }
    cases
}
