//! The four subcommands: solve, sweep, check, diagnose.
//!
//! Exit codes: 0 success (solve: converged and verified), 1 configuration
//! error, 2 non-convergence, 3 assumption violations (check), 4 converged but
//! not verified (solve/diagnose).

use crate::config::{with_param, ConfigError, RunConfig};
use crate::output::{read_run, write_run};
use mfgc_core::assumptions::{verify_sampled, SampleConfig};
use mfgc_core::coupler::{solve, solve_with_continuation, SolveResult};
use mfgc_core::diagnostics;
use mfgc_core::mufix::lambda_moment;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;
pub const EXIT_UNVERIFIED: i32 = 4;

fn config_fail(err: &ConfigError) -> i32 {
    eprintln!("error: {err}");
    EXIT_CONFIG
}

/// Runs one solve (with continuation when a schedule is configured),
/// attaches diagnostics, writes artifacts, prints the one-line summary.
pub fn run_solve_config(config: &RunConfig) -> Result<(SolveResult, bool), String> {
    let model = config.build_model().map_err(|e| e.to_string())?;
    let tgrid = config.time_grid();
    let m0 = config.build_m0().map_err(|e| e.to_string())?;
    let solver = config.solver_config().map_err(|e| e.to_string())?;
    let mut result = if solver.continuation.is_empty() {
        solve(&model, &tgrid, &m0, &solver)
    } else {
        solve_with_continuation(&model, &tgrid, &m0, &solver)
    }
    .map_err(|e| e.to_string())?;
    let report = diagnostics::run_all(&result, &model, &tgrid).map_err(|e| e.to_string())?;
    let verified = report.verified;
    result.diagnostics = Some(report);
    Ok((result, verified))
}

pub fn cmd_solve(config_path: &str) -> i32 {
    let config = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return config_fail(&e),
    };
    let (result, verified) = match run_solve_config(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir = config.out_dir();
    if let Err(e) = write_run(&dir, &config, &result, &config.time_grid(), config.torus()) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    println!(
        "solve {}: converged={} iterations={} residual={:.3e} verified={} -> {}",
        config.model.kind,
        result.converged,
        result.outer_iterations,
        result.final_residual(),
        if verified { "VERIFIED" } else { "UNVERIFIED" },
        dir.display(),
    );
    if !result.converged {
        EXIT_NO_CONVERGENCE
    } else if !verified {
        EXIT_UNVERIFIED
    } else {
        EXIT_OK
    }
}

pub fn cmd_sweep(config_path: &str, param: &str, values_spec: &str, threads: usize) -> i32 {
    let mut values = Vec::new();
    for token in values_spec.split(',').filter(|t| !t.trim().is_empty()) {
        match token.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) => {
                eprintln!("error: --values entry \"{token}\" is not a number");
                return EXIT_CONFIG;
            }
        }
    }
    if values.is_empty() {
        eprintln!("error: --values list is empty");
        return EXIT_CONFIG;
    }
    let values = &values[..];
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {config_path}: {e}");
            return EXIT_CONFIG;
        }
    };
    // validate every configuration before any compute
    let mut configs = Vec::new();
    for &v in values {
        match with_param(&text, param, v) {
            Ok(c) => configs.push((v, c)),
            Err(e) => {
                eprintln!("error at {param} = {v}: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    let threads = threads.max(1);
    let mut rows: Vec<Option<String>> = vec![None; configs.len()];
    let mut all_ok = true;
    for chunk_start in (0..configs.len()).step_by(threads) {
        let chunk_end = (chunk_start + threads).min(configs.len());
        let results: Vec<(usize, Result<String, String>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = configs[chunk_start..chunk_end]
                .iter()
                .enumerate()
                .map(|(off, (v, cfg))| {
                    let idx = chunk_start + off;
                    scope.spawn(move || (idx, sweep_row(*v, cfg)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (idx, row) in results {
            match row {
                Ok(line) => rows[idx] = Some(line),
                Err(e) => {
                    eprintln!("run {param} = {} failed: {e}", configs[idx].0);
                    rows[idx] = Some(format!("{},failed,,,,,,,", configs[idx].0));
                    all_ok = false;
                }
            }
        }
    }
    // write sweep.csv next to the configured output dir
    let base = configs[0].1.out_dir();
    if let Err(e) = std::fs::create_dir_all(&base) {
        eprintln!("error: cannot create {}: {e}", base.display());
        return EXIT_CONFIG;
    }
    let path = base.join("sweep.csv");
    let mut out = String::from(
        "value,converged,residual,u_sup,lambda_inf_max,mass_max_dev,m_min,energy_residual,lambda_bound_margin,max_principle_margin\n",
    );
    for row in rows.into_iter().flatten() {
        out.push_str(&row);
        out.push('\n');
    }
    if let Err(e) = std::fs::write(&path, out) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return EXIT_CONFIG;
    }
    println!(
        "sweep over {param}: {} runs -> {}",
        values.len(),
        path.display()
    );
    if all_ok {
        EXIT_OK
    } else {
        EXIT_NO_CONVERGENCE
    }
}

fn sweep_row(value: f64, config: &RunConfig) -> Result<String, String> {
    let (result, _) = run_solve_config(config)?;
    let u_sup = result
        .u_traj
        .iter()
        .fold(0.0_f64, |a, u| a.max(u.sup_norm()));
    let lambda_inf = result
        .m_traj
        .iter()
        .zip(&result.alpha_traj)
        .fold(0.0_f64, |a, (m, al)| {
            a.max(lambda_moment(m, al, f64::INFINITY))
        });
    let d = result.diagnostics.as_ref().expect("attached by run_solve");
    Ok(format!(
        "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        value,
        result.converged,
        result.final_residual(),
        u_sup,
        lambda_inf,
        d.mass_max_dev,
        d.m_min,
        d.energy_identity_residual,
        d.lambda_bound_margin,
        d.max_principle_margin,
    ))
}

pub fn cmd_check(config_path: &str, h4_sweep: bool) -> i32 {
    let config = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return config_fail(&e),
    };
    let mut model = match config.build_model() {
        Ok(m) => m,
        Err(e) => return config_fail(&e),
    };
    if let Some(c0) = config.check.c0_override {
        let mut constants = *model.constants();
        constants.c0 = c0;
        constants.lambda1 = 0.0; // keep the declared set type-valid
        if let Err(e) = model.override_constants(constants) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        println!("(fixture: growth constant overridden to {c0})");
    }
    let sample_config = SampleConfig {
        p_max: config.check.p_max,
        ..SampleConfig::default()
    };
    let report = match verify_sampled(&model, config.check.samples, config.seed, &sample_config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    println!(
        "assumption check: model={} samples={} seed={} p_max={}",
        report.model, report.n_samples, report.seed, report.p_max
    );
    for check in &report.checks {
        println!(
            "  {:<22} worst margin {:+.6e}  violations {}",
            check.name, check.worst_margin, check.violations
        );
        if let Some(v) = &check.first_violation {
            println!(
                "    first witness: sample {} at x = {:.6}, p = {:.6}, margin {:.3e} ({})",
                v.sample_index, v.x, v.p, v.margin, v.detail
            );
        }
    }
    if let mfgc_core::models::Model::CrowdMotion(cm) = &model {
        let (a, b) = cm.exponents();
        let cases = mfgc_core::assumptions::crowd_existence_region(
            cm.theta(),
            cm.lambda_tilde(),
            a,
            b,
            cm.q0(),
            cm.kernel().is_constant(),
        );
        println!("  crowd existence regimes: {cases:?}");
    }
    let (ok, lhs, rhs) = match diagnostics::small_param_check(&model) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    println!("  small-parameter condition: lhs = {lhs:.6} < rhs = {rhs:.6}: {ok}");
    if h4_sweep {
        run_h4_sweep(config.seed);
    }
    let violations = report.total_violations();
    if violations > 0 {
        println!("{violations} violation(s) recorded");
        EXIT_VIOLATIONS
    } else {
        println!("no violations");
        EXIT_OK
    }
}

/// Random sweep of the 2x2 sensitivity-matrix eigenvalue bound, with the
/// explicit formula cross-checked against the direct eigendecomposition.
fn run_h4_sweep(seed: u64) {
    let report = mfgc_core::assumptions::h4_random_sweep(100_000, seed);
    println!(
        "  sensitivity-matrix sweep: {} tuples, min eigenvalue {:.6}, \
         {} below 1, explicit-vs-direct max rel diff {:.3e}",
        report.samples, report.min_eigenvalue, report.below_one, report.max_path_disagreement
    );
    if report.min_eigenvalue < 1.0 - 1e-10 {
        let (r, s, k, chi) = report.witness;
        println!(
            "    (the claimed lower bound of 1 fails; witness r={r:.6e} s={s:.6e} \
             k={k:.6e} chi={chi:.6e})"
        );
    }
}

pub fn cmd_diagnose(run_dir: &str) -> i32 {
    let dir = Path::new(run_dir);
    let (config, u, m, alpha, summary) = match read_run(dir) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let model = match config.build_model() {
        Ok(m) => m,
        Err(e) => return config_fail(&e),
    };
    let tgrid = config.time_grid();
    let result = SolveResult {
        u_traj: u,
        m_traj: m,
        alpha_traj: alpha,
        residual_history: summary.residual_history.clone(),
        outer_iterations: summary.outer_iterations,
        converged: summary.converged,
        truncation_inactive: summary.truncation_inactive,
        system_residuals: Default::default(),
        diagnostics: None,
    };
    let report = match diagnostics::run_all(&result, &model, &tgrid) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    println!("diagnose {}:", dir.display());
    println!("  mass_max_dev            {:.3e}", report.mass_max_dev);
    println!("  m_min                   {:.6e}", report.m_min);
    println!(
        "  energy_identity_residual {:.6e}",
        report.energy_identity_residual
    );
    println!(
        "  lambda_bound_margin     {:+.6e}",
        report.lambda_bound_margin
    );
    println!(
        "  max_principle_margin    {:+.6e}",
        report.max_principle_margin
    );
    println!("  grad_value_ratio        {:.6}", report.grad_value_ratio);
    if let Some(m) = report.integral_max_principle_margin {
        println!("  integral_max_principle  {m:+.6e}");
    }
    if let Some(m) = report.energy_bound_margin {
        println!("  energy_bound_margin     {m:+.6e}");
    }
    println!(
        "  small_param: lhs {:.6} vs rhs {:.6} -> {}",
        report.small_param_lhs, report.small_param_rhs, report.small_param_ok
    );
    println!(
        "  {}",
        if report.verified {
            "VERIFIED"
        } else {
            "UNVERIFIED"
        }
    );
    if report.verified {
        EXIT_OK
    } else {
        EXIT_UNVERIFIED
    }
}
