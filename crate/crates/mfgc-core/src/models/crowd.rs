//! Crowd motion with preference for (or against) the locally averaged crowd
//! velocity. The running cost penalizes the deviation of a walker's velocity
//! from lambda_tilde times the kernel-averaged drift V(x, mu):
//!
//!   L(x, alpha, mu) = theta/a' |alpha - lt V|^{a'} + (1-theta)/b' |alpha|^{b'} + f(x)
//!
//! The Hamiltonian is its Legendre transform. Closed forms exist for
//! a = b = 2 (any theta) and for theta = 1 (any a >= 2); other exponent
//! combinations are handled only by the numerical transform in the
//! assumption checker, not by the PDE loop.

use crate::grid::{ControlField, ScalarField, TorusGrid};
use crate::models::{Aggregates, FieldSpec, KernelSpec, ModelError, StructuralConstants};

/// Density floor of the sampled-family used when deriving the declared
/// spatial-growth constant (the random densities of the assumption sampler
/// stay above exp(-2)).
const FAMILY_DENSITY_FLOOR: f64 = 0.135;

#[derive(Debug, Clone)]
pub struct CrowdMotion {
    grid: TorusGrid,
    theta: f64,
    lambda_tilde: f64,
    a: f64,
    b: f64,
    q0: f64,
    kernel: KernelSpec,
    kernel_table: Vec<f64>,
    /// Cached k(x_i, x_j)^{q0'} so the normalization is a plain dot product.
    kernel_pow_table: Vec<f64>,
    f0: FieldSpec,
    f0_table: ScalarField,
    g0: FieldSpec,
    g_coupling: f64,
    constants: StructuralConstants,
}

impl CrowdMotion {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TorusGrid,
        theta: f64,
        lambda_tilde: f64,
        a: f64,
        b: f64,
        q0: f64,
        kernel: KernelSpec,
        f0: FieldSpec,
        g0: FieldSpec,
        g_coupling: f64,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(ModelError::InvalidParameter(format!(
                "theta must lie in [0,1], got {theta}"
            )));
        }
        if !(lambda_tilde > -1.0 && lambda_tilde < 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "lambda_tilde must lie in (-1,1), got {lambda_tilde}"
            )));
        }
        if !(a >= 2.0 && b >= 2.0) {
            return Err(ModelError::InvalidParameter(format!(
                "exponents must satisfy a, b >= 2, got a = {a}, b = {b}"
            )));
        }
        if !(q0 > 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "moment exponent q0 must exceed 1 (may be infinite), got {q0}"
            )));
        }
        kernel.validate()?;

        let quadratic = a == 2.0 && b == 2.0;
        let power = theta == 1.0;
        let q = a.min(b);
        let lambda0 = if quadratic {
            lambda_tilde.abs() * theta
        } else {
            // theta = 1 and the general case share the global sensitivity
            // bound |d alpha / d V| <= |lambda_tilde| (scalar controls).
            lambda_tilde.abs()
        };
        let qp = q / (q - 1.0);
        // |H(x,0,mu)|: quadratic case lt^2 th(1-th)/2 V^2 + ||f||; theta = 1
        // case exactly ||f||. |V| <= Lambda_{q0} always.
        let lambda2 = if quadratic {
            0.5 * lambda_tilde * lambda_tilde * theta * (1.0 - theta)
        } else {
            0.0
        };
        // Spatial growth: |d/dx V| <= 2 k'_max Lambda / Z_floor over densities
        // bounded below by the sampler family floor.
        let z_floor = if q0.is_finite() {
            let q0p = q0 / (q0 - 1.0);
            let mean_kq: f64 = {
                // trapezoid-free: kernels are trigonometric, rectangle rule on
                // a fine grid is plenty for a declared constant
                let nn = 512;
                (0..nn)
                    .map(|j| kernel.eval(0.0, j as f64 / nn as f64).powf(q0p))
                    .sum::<f64>()
                    / nn as f64
            };
            (FAMILY_DENSITY_FLOOR * mean_kq).powf(1.0 / q0p)
        } else {
            // q0' = 1: Z is the plain kernel mass
            FAMILY_DENSITY_FLOOR
                * (0..512)
                    .map(|j| kernel.eval(0.0, j as f64 / 512.0))
                    .sum::<f64>()
                / 512.0
        };
        let kv = if kernel.max_deriv() == 0.0 || z_floor == 0.0 {
            0.0
        } else {
            2.0 * kernel.max_deriv() / z_floor
        };
        // |H_x| <= lambda0 |p| Kv Lambda + 2 lambda2 Kv Lambda^2 + ||f'||,
        // then Young products against (1 + |p|^q + Lambda^{q'}).
        let c0_b2 = lambda0 * kv + 2.0 * lambda2 * kv + f0.deriv_sup_bound();
        let c0 = (1.0_f64).max(f0.sup_bound()).max(c0_b2);
        // Duality: H_p p - H = |p|^q / q' + lambda2 V^2 + f >= |p|^q/q' - ||f||.
        let c0_dual = qp.max(2.0) + f0.sup_bound();
        let constants = StructuralConstants {
            q,
            q0,
            lambda0,
            c0,
            c0_dual,
            lambda1: 0.0,
            lambda2,
            g_bound: g0.sup_bound() + g_coupling.abs(),
            beta0: 1.0,
        };
        constants.validate()?;
        let _ = power; // variant dispatch happens at evaluation time
        let f0_table = f0.sample(grid);
        let kernel_table = kernel.table(grid);
        let q0p = if q0.is_finite() { q0 / (q0 - 1.0) } else { 1.0 };
        let kernel_pow_table = kernel_table.iter().map(|k| k.powf(q0p)).collect();
        Ok(Self {
            grid,
            theta,
            lambda_tilde,
            a,
            b,
            q0,
            kernel_table,
            kernel_pow_table,
            kernel,
            f0,
            f0_table,
            g0,
            g_coupling,
            constants,
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn constants(&self) -> &StructuralConstants {
        &self.constants
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda_tilde(&self) -> f64 {
        self.lambda_tilde
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    fn q0_prime(&self) -> f64 {
        if self.q0.is_finite() {
            self.q0 / (self.q0 - 1.0)
        } else {
            1.0
        }
    }

    fn variant(&self) -> Result<Variant, ModelError> {
        if self.a == 2.0 && self.b == 2.0 {
            Ok(Variant::Quadratic)
        } else if self.theta == 1.0 {
            Ok(Variant::Power)
        } else {
            Err(ModelError::UnsupportedVariant(format!(
                "crowd motion has no closed-form Hamiltonian for a = {}, b = {}, theta = {}; \
                 only a = b = 2 or theta = 1 run in the PDE loop",
                self.a, self.b, self.theta
            )))
        }
    }

    /// Average drift V(x, mu) at an arbitrary coordinate, and its
    /// normalization Z; kernel sums are O(n).
    fn drift_at(
        &self,
        x: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<(f64, f64), ModelError> {
        let n = self.grid.n();
        let h = self.grid.h();
        let q0p = self.q0_prime();
        let mut num = 0.0;
        let mut z = 0.0;
        for j in 0..n {
            let k = self.kernel.eval(x, self.grid.node(j));
            num += alpha[j] * k * m[j];
            z += k.powf(q0p) * m[j];
        }
        num *= h;
        z = (z * h).powf(1.0 / q0p);
        if z <= 0.0 {
            return Err(ModelError::DegenerateKernel { node: 0 });
        }
        Ok((num / z, z))
    }

    /// Normalization Z(x_i, mu) on the grid; depends on m only, so slice
    /// solvers compute it once and reuse it across control iterates.
    pub fn normalization(&self, m: &ScalarField) -> Result<ScalarField, ModelError> {
        let n = self.grid.n();
        let h = self.grid.h();
        let q0p = self.q0_prime();
        let mut z = vec![0.0; n];
        for (i, slot) in z.iter_mut().enumerate() {
            let row = &self.kernel_pow_table[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * m[j];
            }
            let zi = (acc * h).powf(1.0 / q0p);
            if zi <= 0.0 {
                return Err(ModelError::DegenerateKernel { node: i });
            }
            *slot = zi;
        }
        Ok(ScalarField::new(self.grid, z))
    }

    /// Aggregates given a precomputed normalization.
    pub fn aggregates_with_normalization(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
        z: &ScalarField,
    ) -> Aggregates {
        let n = self.grid.n();
        let h = self.grid.h();
        let mut v = vec![0.0; n];
        for (i, slot) in v.iter_mut().enumerate() {
            let row = &self.kernel_table[i * n..(i + 1) * n];
            let mut num = 0.0;
            for j in 0..n {
                num += alpha[j] * row[j] * m[j];
            }
            *slot = num * h / z[i];
        }
        Aggregates::KernelDrift {
            v: ScalarField::new(self.grid, v),
        }
    }

    pub fn aggregates(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<Aggregates, ModelError> {
        let z = self.normalization(m)?;
        Ok(self.aggregates_with_normalization(m, alpha, &z))
    }

    fn h_formula(&self, p: f64, v: f64, f: f64) -> Result<f64, ModelError> {
        match self.variant()? {
            Variant::Quadratic => {
                let lt = self.lambda_tilde;
                Ok(0.5 * p * p
                    - lt * self.theta * p * v
                    - 0.5 * lt * lt * self.theta * (1.0 - self.theta) * v * v
                    - f)
            }
            Variant::Power => Ok(p.abs().powf(self.a) / self.a - self.lambda_tilde * p * v - f),
        }
    }

    fn hp_formula(&self, p: f64, v: f64) -> Result<f64, ModelError> {
        match self.variant()? {
            Variant::Quadratic => Ok(p - self.lambda_tilde * self.theta * v),
            Variant::Power => Ok(p.abs().powf(self.a - 2.0) * p - self.lambda_tilde * v),
        }
    }

    fn unpack(agg: &Aggregates) -> Result<&ScalarField, ModelError> {
        match agg {
            Aggregates::KernelDrift { v } => Ok(v),
            _ => Err(ModelError::InvalidParameter(
                "crowd motion expects kernel-drift aggregates".into(),
            )),
        }
    }

    pub fn hamiltonian(&self, i: usize, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        let v = Self::unpack(agg)?;
        self.h_formula(p, v[i], self.f0_table[i])
    }

    pub fn hamiltonian_p(&self, i: usize, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        let v = Self::unpack(agg)?;
        self.hp_formula(p, v[i])
    }

    pub fn hamiltonian_at(
        &self,
        x: f64,
        p: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        let (v, _) = self.drift_at(x, m, alpha)?;
        self.h_formula(p, v, self.f0.eval(x))
    }

    pub fn hamiltonian_p_at(
        &self,
        x: f64,
        p: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        let (v, _) = self.drift_at(x, m, alpha)?;
        self.hp_formula(p, v)
    }

    pub fn terminal_cost(&self, m_t: &ScalarField) -> ScalarField {
        let mut g = self.g0.sample(self.grid);
        if self.g_coupling != 0.0 {
            let smoothed = super::kernel_smooth(&self.kernel, m_t);
            for i in 0..self.grid.n() {
                g[i] += self.g_coupling * smoothed[i];
            }
        }
        g
    }

    /// Average drift V(x, mu) at an arbitrary coordinate; used by the
    /// numerical Legendre transform path for exponents without closed form.
    pub fn average_drift_at(
        &self,
        x: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        self.drift_at(x, m, alpha).map(|(v, _)| v)
    }

    pub fn penalty_at(&self, x: f64) -> f64 {
        self.f0.eval(x)
    }

    /// Replaces the declared constants (type invariants still enforced);
    /// meant for understated-constant fixtures and expert overrides.
    pub fn override_constants(&mut self, c: StructuralConstants) -> Result<(), ModelError> {
        c.validate()?;
        self.constants = c;
        Ok(())
    }
}

enum Variant {
    Quadratic,
    Power,
}
