//! TOML run configuration: model block, grids, solver parameters, output
//! location. Unknown keys are rejected; every referenced field is validated
//! before any compute starts.

use mfgc_core::coupler::{InitialGuess, SolverConfig};
use mfgc_core::grid::{ScalarField, TimeGrid, TorusGrid};
use mfgc_core::models::{
    CrowdMotion, FieldSpec, Flocking, KernelSpec, LinearDemand, Model, NegCorrResources,
    PriceImpact,
};
use mfgc_core::pde::{Advection, SchemeConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Truncation radius: a number or the string "inf".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapSpec {
    Number(f64),
    Word(String),
}

impl CapSpec {
    pub fn value(&self) -> Result<f64, ConfigError> {
        match self {
            CapSpec::Number(v) if *v > 0.0 => Ok(*v),
            CapSpec::Number(v) => Err(ConfigError::Invalid(format!(
                "solver.m_cap must be positive, got {v}"
            ))),
            CapSpec::Word(w) if w == "inf" => Ok(f64::INFINITY),
            CapSpec::Word(w) => Err(ConfigError::Invalid(format!(
                "solver.m_cap must be a positive number or \"inf\", got \"{w}\""
            ))),
        }
    }
}

impl Default for CapSpec {
    fn default() -> Self {
        CapSpec::Word("inf".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: String,
    pub eps: Option<f64>,
    pub eps_tilde: Option<f64>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub coupling: Option<f64>,
    pub theta: Option<f64>,
    pub lambda_tilde: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub q0: Option<f64>,
    pub kernel: Option<KernelSpec>,
    pub f: Option<FieldSpec>,
    pub g: Option<FieldSpec>,
    pub g_coupling: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub nt: usize,
    pub t_final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub nu: f64,
    pub m_cap: CapSpec,
    pub omega: f64,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub tol_mu: f64,
    pub max_mu: usize,
    pub advection: Advection,
    pub cfl_guard: bool,
    pub continuation: Vec<f64>,
    pub initial_guess: InitialGuess,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            nu: 0.05,
            m_cap: CapSpec::default(),
            omega: 0.5,
            tol_outer: 1e-8,
            max_outer: 200,
            tol_mu: 1e-12,
            max_mu: 500,
            advection: Advection::Centered,
            cfl_guard: true,
            continuation: Vec::new(),
            initial_guess: InitialGuess::Zero,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckBlock {
    pub samples: usize,
    pub p_max: f64,
    /// Fault-injection fixture: replaces the declared growth constant before
    /// sampling, so violations (with witnesses) can be exercised end to end.
    pub c0_override: Option<f64>,
}

impl Default for CheckBlock {
    fn default() -> Self {
        Self {
            samples: 10_000,
            p_max: 10.0,
            c0_override: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelBlock,
    pub grid: GridBlock,
    pub initial_density: FieldSpec,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub check: CheckBlock,
}

impl RunConfig {
    pub fn from_path(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.n < 4 {
            return Err(ConfigError::Invalid(format!(
                "grid.n must be at least 4, got {}",
                self.grid.n
            )));
        }
        if self.grid.nt < 1 || !(self.grid.t_final > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "grid.nt >= 1 and grid.t_final > 0 required (nt = {}, t_final = {})",
                self.grid.nt, self.grid.t_final
            )));
        }
        if !(self.solver.omega > 0.0 && self.solver.omega <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "solver.omega must lie in (0, 1], got {}",
                self.solver.omega
            )));
        }
        if !(self.solver.nu > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "solver.nu must be positive, got {}",
                self.solver.nu
            )));
        }
        if !(self.solver.tol_outer > 0.0) || !(self.solver.tol_mu > 0.0) {
            return Err(ConfigError::Invalid(
                "solver.tol_outer and solver.tol_mu must be positive".into(),
            ));
        }
        self.solver.m_cap.value()?;
        if self.check.samples == 0 {
            return Err(ConfigError::Invalid(
                "check.samples must be positive".into(),
            ));
        }
        // instantiating the model runs its own parameter validation
        self.build_model()?;
        self.build_m0()?;
        Ok(())
    }

    pub fn torus(&self) -> TorusGrid {
        TorusGrid::new(self.grid.n).expect("validated")
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.t_final, self.grid.nt).expect("validated")
    }

    pub fn build_model(&self) -> Result<Model, ConfigError> {
        let grid = TorusGrid::new(self.grid.n)
            .map_err(|e| ConfigError::Invalid(format!("grid.n: {e}")))?;
        let b = &self.model;
        let f0 = b.f.clone().unwrap_or_default();
        let g0 = b.g.clone().unwrap_or_default();
        let g_coupling = b.g_coupling.unwrap_or(0.0);
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| ConfigError::Invalid(format!("missing key model.{key}")))
        };
        let model = match b.kind.as_str() {
            "linear_demand" => Model::LinearDemand(
                LinearDemand::new(grid, need(b.eps, "eps")?, g0, g_coupling)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
            "neg_corr_resources" => {
                let matrix = b
                    .matrix
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("missing key model.matrix".into()))?;
                Model::NegCorrResources(
                    NegCorrResources::new(
                        grid,
                        matrix,
                        f0,
                        b.coupling.unwrap_or(0.0),
                        g0,
                        g_coupling,
                    )
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
            "price_impact" => Model::PriceImpact(
                PriceImpact::new(grid, need(b.eps_tilde, "eps_tilde")?, f0, g0, g_coupling)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
            "crowd_motion" => {
                let kernel = b
                    .kernel
                    .ok_or_else(|| ConfigError::Invalid("missing key model.kernel".into()))?;
                Model::CrowdMotion(
                    CrowdMotion::new(
                        grid,
                        need(b.theta, "theta")?,
                        need(b.lambda_tilde, "lambda_tilde")?,
                        b.a.unwrap_or(2.0),
                        b.b.unwrap_or(2.0),
                        b.q0.unwrap_or(2.0),
                        kernel,
                        f0,
                        g0,
                        g_coupling,
                    )
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
            "flocking" => {
                let kernel = b
                    .kernel
                    .ok_or_else(|| ConfigError::Invalid("missing key model.kernel".into()))?;
                Model::Flocking(
                    Flocking::new(grid, kernel, f0, g0, g_coupling)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown model.kind \"{other}\" (expected linear_demand, \
                     neg_corr_resources, price_impact, crowd_motion or flocking)"
                )))
            }
        };
        Ok(model)
    }

    /// Samples the initial density, requires positivity, and normalizes its
    /// discrete mass to exactly one.
    pub fn build_m0(&self) -> Result<ScalarField, ConfigError> {
        let grid = self.torus();
        let mut m0 = self.initial_density.sample(grid);
        let min = m0.min();
        if !(min > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "initial_density must be positive everywhere (min sampled value {min})"
            )));
        }
        let mass = mfgc_core::grid::integrate(&m0);
        for i in 0..grid.n() {
            m0[i] /= mass;
        }
        Ok(m0)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        Ok(SolverConfig {
            m_cap: self.solver.m_cap.value()?,
            omega: self.solver.omega,
            tol_outer: self.solver.tol_outer,
            max_outer: self.solver.max_outer,
            tol_mu: self.solver.tol_mu,
            max_mu: self.solver.max_mu,
            scheme: SchemeConfig {
                nu: self.solver.nu,
                advection: self.solver.advection,
                cfl_guard: self.solver.cfl_guard,
            },
            continuation: self.solver.continuation.clone(),
            initial_guess: self.solver.initial_guess,
        })
    }

    /// Output directory: `MFGC_OUT` env var wins, then output.dir, then "runs".
    pub fn out_dir(&self) -> std::path::PathBuf {
        if let Ok(dir) = std::env::var("MFGC_OUT") {
            return dir.into();
        }
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| "runs".into())
            .into()
    }
}

/// Applies `--param key --values v` by rewriting one numeric key in the TOML
/// tree, then re-validating the whole config.
pub fn with_param(text: &str, key: &str, value: f64) -> Result<RunConfig, ConfigError> {
    let mut tree: toml::Value = toml::from_str(text)?;
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts
        .split_last()
        .ok_or_else(|| ConfigError::Invalid("empty --param key".into()))?;
    let mut node = &mut tree;
    for part in path {
        let table = node.as_table_mut().ok_or_else(|| {
            ConfigError::Invalid(format!("config path {key} is not a table at {part}"))
        })?;
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| ConfigError::Invalid(format!("config path {key} is not a table")))?;
    table.insert(last.to_string(), toml::Value::Float(value));
    let text = toml::to_string(&tree)
        .map_err(|e| ConfigError::Invalid(format!("cannot re-serialize config: {e}")))?;
    RunConfig::from_str(&text)
}
