//! Uniform periodic discretization of the torus [0,1) and of [0,T], plus the
//! difference and quadrature kernels shared by every other module.
//!
//! All index arithmetic wraps modulo `n`. Quadrature is the rectangle rule
//! and gradients are centered differences, so summation by parts holds
//! exactly on the grid; the energy-identity diagnostic relies on that.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("torus grid needs at least 4 cells, got {0}")]
    TooFewCells(usize),
    #[error("time grid needs nt >= 1 and T > 0 (got nt = {nt}, T = {t_final})")]
    BadTimeGrid { nt: usize, t_final: f64 },
    #[error("cyclic tridiagonal system is not strictly diagonally dominant: |{diag}| <= 2|{off}|")]
    DominanceViolation { diag: f64, off: f64 },
}

/// Uniform mesh of the 1-D torus [0,1) with nodes `x_i = i/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < 4 {
            return Err(GridError::TooFewCells(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh spacing h = 1/n.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Coordinate of node `i` (taken modulo n).
    pub fn node(&self, i: usize) -> f64 {
        (i % self.n) as f64 * self.h()
    }

    /// Wraps a signed index onto 0..n.
    pub fn wrap(&self, i: isize) -> usize {
        let n = self.n as isize;
        i.rem_euclid(n) as usize
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }
}

/// Uniform mesh of [0,T] with nt steps of size dt = T/nt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    nt: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self, GridError> {
        if nt < 1 || !(t_final > 0.0) {
            return Err(GridError::BadTimeGrid { nt, t_final });
        }
        Ok(Self { t_final, nt })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Time of slice `k`, k = 0..=nt.
    pub fn time(&self, k: usize) -> f64 {
        self.dt() * k as f64
    }
}

/// Nodal values of a scalar quantity (u or m slice) on a torus grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "field length must match grid size");
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { grid, values }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::new(grid, vec![0.0; grid.n()])
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::new(grid, vec![c; grid.n()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Sup-norm distance to another field on the same grid.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    /// Cyclic shift by `k` nodes: out_i = self_{i-k}.
    pub fn shift(&self, k: isize) -> ScalarField {
        let n = self.grid.n();
        let mut out = vec![0.0; n];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.values[self.grid.wrap(i as isize - k)];
        }
        ScalarField::new(self.grid, out)
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Nodal values of a feedback control (velocity-like) on a torus grid.
///
/// Thin wrapper over [`ScalarField`] so control data cannot be confused with
/// densities or value functions in signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField(ScalarField);

impl ControlField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Self {
        Self(ScalarField::new(grid, values))
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self(ScalarField::zeros(grid))
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self(ScalarField::constant(grid, c))
    }

    pub fn from_scalar(f: ScalarField) -> Self {
        Self(f)
    }

    pub fn as_scalar(&self) -> &ScalarField {
        &self.0
    }
}

impl std::ops::Deref for ControlField {
    type Target = ScalarField;
    fn deref(&self) -> &ScalarField {
        &self.0
    }
}

impl std::ops::DerefMut for ControlField {
    fn deref_mut(&mut self) -> &mut ScalarField {
        &mut self.0
    }
}

/// Centered periodic gradient: out_i = (f_{i+1} - f_{i-1}) / 2h.
pub fn gradient_centered(f: &ScalarField) -> ScalarField {
    let n = f.grid().n();
    let two_h = 2.0 * f.grid().h();
    let v = f.values();
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        *slot = (v[ip] - v[im]) / two_h;
    }
    ScalarField::new(f.grid(), out)
}

/// One-sided periodic differences (D^- f, D^+ f), used by upwind stencils.
pub fn gradient_one_sided(f: &ScalarField) -> (ScalarField, ScalarField) {
    let n = f.grid().n();
    let h = f.grid().h();
    let v = f.values();
    let mut bwd = vec![0.0; n];
    let mut fwd = vec![0.0; n];
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        bwd[i] = (v[i] - v[im]) / h;
        fwd[i] = (v[ip] - v[i]) / h;
    }
    (
        ScalarField::new(f.grid(), bwd),
        ScalarField::new(f.grid(), fwd),
    )
}

/// Periodic discrete Laplacian: out_i = (f_{i+1} - 2 f_i + f_{i-1}) / h^2.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let n = f.grid().n();
    let h2 = f.grid().h() * f.grid().h();
    let v = f.values();
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        *slot = (v[ip] - 2.0 * v[i] + v[im]) / h2;
    }
    ScalarField::new(f.grid(), out)
}

/// Rectangle-rule quadrature h * sum_i f_i; exact for grid-periodic
/// trigonometric polynomials of degree < n.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid().h() * f.values().iter().sum::<f64>()
}

/// Solves the cyclic tridiagonal system with constant coefficients:
/// diag * y_i + off * (y_{i-1} + y_{i+1}) = rhs_i, indices mod n.
///
/// Sherman-Morrison reduction to two non-cyclic Thomas solves, O(n).
pub fn periodic_tridiag_solve(
    diag: f64,
    off: f64,
    rhs: &ScalarField,
) -> Result<ScalarField, GridError> {
    if !(diag.abs() > 2.0 * off.abs()) {
        return Err(GridError::DominanceViolation { diag, off });
    }
    let n = rhs.len();
    if off == 0.0 {
        let out = rhs.values().iter().map(|r| r / diag).collect();
        return Ok(ScalarField::new(rhs.grid(), out));
    }

    // A = T + u v^T with T the non-cyclic tridiagonal matrix whose first and
    // last diagonal entries are modified, u = (gamma, 0, .., 0, off)^T and
    // v = (1, 0, .., 0, off/gamma)^T.
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - off * off / gamma;

    let y = thomas_constant_off(&d, off, rhs.values());
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = thomas_constant_off(&d, off, &u);

    let factor = (y[0] + (off / gamma) * y[n - 1]) / (1.0 + z[0] + (off / gamma) * z[n - 1]);
    let out = y
        .iter()
        .zip(&z)
        .map(|(yi, zi)| yi - factor * zi)
        .collect::<Vec<_>>();
    Ok(ScalarField::new(rhs.grid(), out))
}

/// Thomas algorithm for a non-cyclic tridiagonal system with per-row diagonal
/// `d` and constant sub/super-diagonal `off`.
fn thomas_constant_off(d: &[f64], off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c_prime = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = d[0];
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c_prime[i] = off / beta;
        beta = d[i] - off * c_prime[i];
        x[i] = (rhs[i] - off * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c_prime[i + 1] * x[i + 1];
    }
    x
}

/// Applies the cyclic tridiagonal operator, for residual checks.
pub fn apply_periodic_tridiag(diag: f64, off: f64, y: &ScalarField) -> ScalarField {
    let n = y.len();
    let v = y.values();
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        *slot = diag * v[i] + off * (v[im] + v[ip]);
    }
    ScalarField::new(y.grid(), out)
}
