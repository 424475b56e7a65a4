//! Browser demo bindings: three interactive operations over the solver,
//! exchanged as JSON strings so the same entry points run natively in tests
//! and under wasm-bindgen in the page.
//!
//! Build the wasm package with `wasm-pack build --target web crates/mfgc-demo`
//! and open `crates/mfgc-demo/www/index.html` from a static file server.

use mfgc_core::coupler::{solve, SolverConfig};
use mfgc_core::diagnostics;
use mfgc_core::grid::{ScalarField, TimeGrid, TorusGrid};
use mfgc_core::models::{
    CrowdMotion, FieldSpec, Flocking, KernelSpec, LinearDemand, Model, PriceImpact,
};
use mfgc_core::mufix::solve_mu;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::wasm_bindgen;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoParams {
    /// "linear_demand" | "price_impact" | "crowd_motion" | "flocking"
    pub model: String,
    pub n: usize,
    pub nt: usize,
    pub t_final: f64,
    pub nu: f64,
    /// Competition degree (linear demand) or spread (price impact).
    pub eps: f64,
    /// Crowd parameters.
    pub theta: f64,
    pub lambda_tilde: f64,
    /// Kernel strength for crowd / flocking.
    pub kernel_amp: f64,
    /// Amplitudes of the cosine terminal cost and penalty.
    pub g_amp: f64,
    pub f_amp: f64,
    /// Initial density bump amplitude in (-1, 1).
    pub m0_amp: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            model: "linear_demand".into(),
            n: 96,
            nt: 96,
            t_final: 1.0,
            nu: 0.05,
            eps: 1.0,
            theta: 0.5,
            lambda_tilde: 0.5,
            kernel_amp: 1.0,
            g_amp: 0.3,
            f_amp: 0.2,
            m0_amp: 0.5,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FieldSurface {
    pub nt: usize,
    pub n: usize,
    /// Row-major (slice-major) values, (nt + 1) * n entries.
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl FieldSurface {
    fn from_slices(slices: &[ScalarField]) -> Self {
        let n = slices[0].len();
        let mut values = Vec::with_capacity(slices.len() * n);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for s in slices {
            for i in 0..n {
                min = min.min(s[i]);
                max = max.max(s[i]);
                values.push(s[i]);
            }
        }
        Self {
            nt: slices.len() - 1,
            n,
            values,
            min,
            max,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveDemoResult {
    pub model: String,
    pub converged: bool,
    pub outer_iterations: usize,
    pub residual_history: Vec<f64>,
    pub u: FieldSurface,
    pub m: FieldSurface,
    pub alpha: FieldSurface,
    pub mass_max_dev: f64,
    pub m_min: f64,
    pub energy_identity_residual: f64,
    pub lambda_bound_margin: f64,
    pub max_principle_margin: f64,
    pub verified: bool,
}

fn build_model(p: &DemoParams) -> Result<Model, String> {
    let grid = TorusGrid::new(p.n).map_err(|e| e.to_string())?;
    let g0 = FieldSpec::cosine(1, p.g_amp);
    let f0 = FieldSpec::cosine(1, p.f_amp);
    let model = match p.model.as_str() {
        "linear_demand" => {
            Model::LinearDemand(LinearDemand::new(grid, p.eps, g0, 0.0).map_err(|e| e.to_string())?)
        }
        "price_impact" => Model::PriceImpact(
            PriceImpact::new(grid, p.eps, f0, g0, 0.0).map_err(|e| e.to_string())?,
        ),
        "crowd_motion" => Model::CrowdMotion(
            CrowdMotion::new(
                grid,
                p.theta,
                p.lambda_tilde,
                2.0,
                2.0,
                2.0,
                KernelSpec::Cosine {
                    offset: p.kernel_amp.max(0.0),
                    amp: p.kernel_amp.max(0.0),
                },
                f0,
                g0,
                0.0,
            )
            .map_err(|e| e.to_string())?,
        ),
        "flocking" => Model::Flocking(
            Flocking::new(
                grid,
                KernelSpec::Cosine {
                    offset: 0.5 * p.kernel_amp.max(0.0),
                    amp: 0.5 * p.kernel_amp.max(0.0),
                },
                f0,
                g0,
                0.0,
            )
            .map_err(|e| e.to_string())?,
        ),
        other => return Err(format!("unknown demo model \"{other}\"")),
    };
    Ok(model)
}

fn initial_density(grid: TorusGrid, amp: f64) -> ScalarField {
    let amp = amp.clamp(-0.95, 0.95);
    let mut m0 = ScalarField::from_fn(grid, |x| 1.0 + amp * (TAU * x).cos());
    let mass = mfgc_core::grid::integrate(&m0);
    for i in 0..grid.n() {
        m0[i] /= mass;
    }
    m0
}

/// Full coupled solve; returns the (u, m, alpha) surfaces and diagnostics.
pub fn solve_demo_impl(params_json: &str) -> Result<String, String> {
    let p: DemoParams = serde_json::from_str(params_json).map_err(|e| e.to_string())?;
    let model = build_model(&p)?;
    let tgrid = TimeGrid::new(p.t_final, p.nt).map_err(|e| e.to_string())?;
    let m0 = initial_density(model.grid(), p.m0_amp);
    let mut config = SolverConfig::new(p.nu);
    config.max_outer = 120;
    let result = solve(&model, &tgrid, &m0, &config).map_err(|e| e.to_string())?;
    let report = diagnostics::run_all(&result, &model, &tgrid).map_err(|e| e.to_string())?;
    let alpha_scalars: Vec<ScalarField> = result
        .alpha_traj
        .iter()
        .map(|a| a.as_scalar().clone())
        .collect();
    let out = SolveDemoResult {
        model: model.name().into(),
        converged: result.converged,
        outer_iterations: result.outer_iterations,
        residual_history: result.residual_history.clone(),
        u: FieldSurface::from_slices(&result.u_traj),
        m: FieldSurface::from_slices(&result.m_traj),
        alpha: FieldSurface::from_slices(&alpha_scalars),
        mass_max_dev: report.mass_max_dev,
        m_min: report.m_min,
        energy_identity_residual: report.energy_identity_residual,
        lambda_bound_margin: report.lambda_bound_margin,
        max_principle_margin: report.max_principle_margin,
        verified: report.verified,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct MuDemoResult {
    pub lambda0: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    pub alpha: Vec<f64>,
    pub x: Vec<f64>,
}

/// One-slice measure fixed point from a cosine value gradient; returns the
/// per-iteration residuals so the page can plot the contraction.
pub fn mu_iteration_demo_impl(params_json: &str) -> Result<String, String> {
    let p: DemoParams = serde_json::from_str(params_json).map_err(|e| e.to_string())?;
    let model = build_model(&p)?;
    let grid = model.grid();
    let p_field = ScalarField::from_fn(grid, |x| p.g_amp * TAU * (TAU * x).sin() * 0.3);
    let m = initial_density(grid, p.m0_amp);

    // rerun the iteration manually to expose every residual
    let ctx = model.slice_context(&m).map_err(|e| e.to_string())?;
    let mut alpha = mfgc_core::grid::ControlField::zeros(grid);
    let mut residuals = Vec::new();
    for _ in 0..60 {
        let agg = model
            .aggregates_in(&m, &alpha, &ctx)
            .map_err(|e| e.to_string())?;
        let mut next = Vec::with_capacity(grid.n());
        let mut diff = 0.0_f64;
        for i in 0..grid.n() {
            let hp = model
                .hamiltonian_p(i, p_field[i], &agg)
                .map_err(|e| e.to_string())?;
            let v = mfgc_core::mufix::truncate_tm(-hp, f64::INFINITY);
            diff = diff.max((v - alpha[i]).abs());
            next.push(v);
        }
        alpha = mfgc_core::grid::ControlField::new(grid, next);
        residuals.push(diff);
        if diff < 1e-14 {
            break;
        }
    }
    // cross-check with the library path
    let (lib_alpha, report) =
        solve_mu(&model, &p_field, &m, f64::INFINITY, 1e-12, 200).map_err(|e| e.to_string())?;
    let out = MuDemoResult {
        lambda0: model.contraction_constant(),
        iterations: report.iterations,
        converged: report.converged,
        residuals,
        alpha: lib_alpha.values().to_vec(),
        x: grid.nodes().collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDemoParams {
    pub base: DemoParams,
    /// Values substituted for the model's coupling parameter (eps for the
    /// competition / price models, lambda_tilde for crowd, kernel_amp for
    /// flocking).
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepDemoRow {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub u_sup: f64,
    pub alpha_sup: f64,
    pub m_max: f64,
    /// Per-value failure (bad parameters, divergence); the sweep continues.
    pub error: Option<String>,
}

/// Parameter sweep; returns one summary row per value for curve plots.
pub fn sweep_demo_impl(params_json: &str) -> Result<String, String> {
    let p: SweepDemoParams = serde_json::from_str(params_json).map_err(|e| e.to_string())?;
    if p.values.is_empty() {
        return Err("sweep needs at least one value".into());
    }
    let mut rows = Vec::new();
    for &v in &p.values {
        let mut params = DemoParams {
            model: p.base.model.clone(),
            ..p.base
        };
        match params.model.as_str() {
            "crowd_motion" => params.lambda_tilde = v,
            "flocking" => params.kernel_amp = v,
            _ => params.eps = v,
        }
        let row = (|| -> Result<SweepDemoRow, String> {
            let model = build_model(&params)?;
            let tgrid = TimeGrid::new(params.t_final, params.nt).map_err(|e| e.to_string())?;
            let m0 = initial_density(model.grid(), params.m0_amp);
            let mut config = SolverConfig::new(params.nu);
            config.max_outer = 120;
            let r = solve(&model, &tgrid, &m0, &config).map_err(|e| e.to_string())?;
            let u_sup = r.u_traj.iter().fold(0.0_f64, |a, u| a.max(u.sup_norm()));
            let alpha_sup = r
                .alpha_traj
                .iter()
                .fold(0.0_f64, |a, al| a.max(al.sup_norm()));
            let m_max = r.m_traj.iter().fold(0.0_f64, |a, m| {
                a.max(m.values().iter().cloned().fold(0.0, f64::max))
            });
            Ok(SweepDemoRow {
                value: v,
                converged: r.converged,
                iterations: r.outer_iterations,
                u_sup,
                alpha_sup,
                m_max,
                error: None,
            })
        })();
        rows.push(row.unwrap_or_else(|e| SweepDemoRow {
            value: v,
            converged: false,
            iterations: 0,
            u_sup: f64::NAN,
            alpha_sup: f64::NAN,
            m_max: f64::NAN,
            error: Some(e),
        }));
    }
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

fn err_json(e: String) -> String {
    serde_json::json!({ "error": e }).to_string()
}

/// Coupled solve; JSON in, JSON out. See [`DemoParams`].
#[wasm_bindgen]
pub fn solve_demo(params_json: &str) -> String {
    solve_demo_impl(params_json).unwrap_or_else(err_json)
}

/// Single-slice measure fixed-point explorer.
#[wasm_bindgen]
pub fn mu_iteration_demo(params_json: &str) -> String {
    mu_iteration_demo_impl(params_json).unwrap_or_else(err_json)
}

/// Coupling-parameter sweep.
#[wasm_bindgen]
pub fn sweep_demo(params_json: &str) -> String {
    sweep_demo_impl(params_json).unwrap_or_else(err_json)
}
