//! Analytic periodic fields (finite Fourier series) and interaction kernels.
//!
//! Penalties f, terminal costs g and initial densities are specified this way
//! so they can be evaluated both on grid nodes and at arbitrary coordinates
//! (the assumption sampler differentiates them off-grid).

use crate::grid::{ScalarField, TorusGrid};
use crate::models::ModelError;
use serde::{Deserialize, Serialize};

const TAU: f64 = std::f64::consts::TAU;

/// A real trigonometric polynomial c + sum a_k cos(2 pi k x) + sum b_k sin(2 pi k x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSpec {
    pub constant: f64,
    /// (mode, coefficient) pairs for cosine terms.
    pub cos: Vec<(u32, f64)>,
    /// (mode, coefficient) pairs for sine terms.
    pub sin: Vec<(u32, f64)>,
}

impl FieldSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn cosine(mode: u32, coeff: f64) -> Self {
        Self {
            constant: 0.0,
            cos: vec![(mode, coeff)],
            sin: vec![],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.constant;
        for &(k, a) in &self.cos {
            v += a * (TAU * k as f64 * x).cos();
        }
        for &(k, b) in &self.sin {
            v += b * (TAU * k as f64 * x).sin();
        }
        v
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for &(k, a) in &self.cos {
            v -= a * TAU * k as f64 * (TAU * k as f64 * x).sin();
        }
        for &(k, b) in &self.sin {
            v += b * TAU * k as f64 * (TAU * k as f64 * x).cos();
        }
        v
    }

    /// Upper bound |c| + sum |coeffs| on the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.constant.abs()
            + self.cos.iter().map(|(_, a)| a.abs()).sum::<f64>()
            + self.sin.iter().map(|(_, b)| b.abs()).sum::<f64>()
    }

    /// Upper bound on the sup norm of the derivative.
    pub fn deriv_sup_bound(&self) -> f64 {
        let s: f64 = self
            .cos
            .iter()
            .chain(self.sin.iter())
            .map(|(k, a)| *k as f64 * a.abs())
            .sum();
        TAU * s
    }

    pub fn sample(&self, grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.cos.is_empty() && self.sin.is_empty()
    }
}

/// Nonnegative C^1 interaction kernel on the torus, a function of x - y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Constant {
        value: f64,
    },
    /// offset + amp cos(2 pi (x - y)); requires offset >= |amp| >= 0.
    Cosine {
        offset: f64,
        amp: f64,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            KernelSpec::Constant { value } => {
                if value < 0.0 {
                    return Err(ModelError::InvalidParameter(format!(
                        "constant kernel must be nonnegative, got {value}"
                    )));
                }
            }
            KernelSpec::Cosine { offset, amp } => {
                if offset < amp.abs() {
                    return Err(ModelError::InvalidParameter(format!(
                        "cosine kernel needs offset >= |amp| for nonnegativity \
                         (offset = {offset}, amp = {amp})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            KernelSpec::Constant { value } => value,
            KernelSpec::Cosine { offset, amp } => offset + amp * (TAU * (x - y)).cos(),
        }
    }

    /// d/dx k(x, y).
    pub fn deriv_x(&self, x: f64, y: f64) -> f64 {
        match *self {
            KernelSpec::Constant { .. } => 0.0,
            KernelSpec::Cosine { offset: _, amp } => -amp * TAU * (TAU * (x - y)).sin(),
        }
    }

    pub fn max_value(&self) -> f64 {
        match *self {
            KernelSpec::Constant { value } => value,
            KernelSpec::Cosine { offset, amp } => offset + amp.abs(),
        }
    }

    pub fn max_deriv(&self) -> f64 {
        match *self {
            KernelSpec::Constant { .. } => 0.0,
            KernelSpec::Cosine { offset: _, amp } => TAU * amp.abs(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(
            *self,
            KernelSpec::Constant { .. } | KernelSpec::Cosine { amp: 0.0, .. }
        )
    }

    /// Samples the n x n node table, row-major: table[i * n + j] = k(x_i, x_j).
    pub fn table(&self, grid: TorusGrid) -> Vec<f64> {
        let n = grid.n();
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                t[i * n + j] = self.eval(grid.node(i), grid.node(j));
            }
        }
        t
    }
}
