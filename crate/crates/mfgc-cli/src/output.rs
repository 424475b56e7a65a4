//! Run artifacts: field CSVs with round-trip-exact decimals, the JSON run
//! summary, and the readers the diagnose command uses to reload them.

use crate::config::RunConfig;
use mfgc_core::coupler::SolveResult;
use mfgc_core::grid::{ControlField, ScalarField, TimeGrid, TorusGrid};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::{BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one field trajectory as `t,x,value` rows, one per (slice, node),
/// with 17-significant-digit decimals so parsing reproduces the exact bits.
pub fn write_field_csv(
    path: &Path,
    tgrid: &TimeGrid,
    grid: TorusGrid,
    slices: &[ScalarField],
) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,x,value").map_err(io_err(path))?;
    for (k, slice) in slices.iter().enumerate() {
        let t = tgrid.time(k);
        for i in 0..grid.n() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", t, grid.node(i), slice[i])
                .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a field trajectory back; slice boundaries are detected from the
/// repeating node column.
pub fn read_field_csv(path: &Path, grid: TorusGrid) -> Result<Vec<ScalarField>, OutputError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "t,x,value" {
        return Err(OutputError::Malformed {
            path: path.display().to_string(),
            reason: format!("expected header t,x,value, got {header}"),
        });
    }
    let mut slices = Vec::new();
    let mut current = Vec::with_capacity(grid.n());
    for (lineno, line) in lines.enumerate() {
        let mut parts = line.split(',');
        let (_t, _x, v) = (parts.next(), parts.next(), parts.next());
        let v: f64 = v
            .ok_or_else(|| OutputError::Malformed {
                path: path.display().to_string(),
                reason: format!("line {}: missing value column", lineno + 2),
            })?
            .parse()
            .map_err(|e| OutputError::Malformed {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", lineno + 2),
            })?;
        current.push(v);
        if current.len() == grid.n() {
            slices.push(ScalarField::new(grid, std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        return Err(OutputError::Malformed {
            path: path.display().to_string(),
            reason: "trailing partial slice".into(),
        });
    }
    Ok(slices)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub converged: bool,
    pub outer_iterations: usize,
    pub residual_history: Vec<f64>,
    pub diagnostics: serde_json::Value,
    pub config_echo: RunConfig,
    pub verified: bool,
    pub truncation_inactive: bool,
    pub system_residuals: serde_json::Value,
    pub model: String,
}

/// Writes u.csv, m.csv, alpha.csv and summary.json into `dir`.
pub fn write_run(
    dir: &Path,
    config: &RunConfig,
    result: &SolveResult,
    tgrid: &TimeGrid,
    grid: TorusGrid,
) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_field_csv(&dir.join("u.csv"), tgrid, grid, &result.u_traj)?;
    write_field_csv(&dir.join("m.csv"), tgrid, grid, &result.m_traj)?;
    let alpha_scalars: Vec<ScalarField> = result
        .alpha_traj
        .iter()
        .map(|a| a.as_scalar().clone())
        .collect();
    write_field_csv(&dir.join("alpha.csv"), tgrid, grid, &alpha_scalars)?;

    let verified = result
        .diagnostics
        .as_ref()
        .map(|d| d.verified)
        .unwrap_or(false);
    let summary = json!({
        "converged": result.converged,
        "outer_iterations": result.outer_iterations,
        "residual_history": result.residual_history,
        "diagnostics": result.diagnostics,
        "config_echo": config,
        "verified": verified,
        "truncation_inactive": result.truncation_inactive,
        "system_residuals": result.system_residuals,
        "model": config.model.kind,
    });
    let path = dir.join("summary.json");
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush().map_err(io_err(&path))
}

/// Everything a reloaded run directory carries.
pub type LoadedRun = (
    RunConfig,
    Vec<ScalarField>,
    Vec<ScalarField>,
    Vec<ControlField>,
    Summary,
);

/// Reloads a run directory into (config, u, m, alpha, summary).
pub fn read_run(dir: &Path) -> Result<LoadedRun, OutputError> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let summary: Summary = serde_json::from_str(&text)?;
    let config = summary.config_echo.clone();
    let grid = config.torus();
    let u = read_field_csv(&dir.join("u.csv"), grid)?;
    let m = read_field_csv(&dir.join("m.csv"), grid)?;
    let alpha = read_field_csv(&dir.join("alpha.csv"), grid)?
        .into_iter()
        .map(ControlField::from_scalar)
        .collect();
    Ok((config, u, m, alpha, summary))
}
