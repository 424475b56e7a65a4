//! First-order flocking: walkers control their velocity and pay for deviating
//! from the unnormalized weighted crowd velocity A(x, mu); Z(x, mu) is the
//! kernel mass around x.
//!
//!   L(x, alpha, mu) = |alpha|^2/2 + |Z alpha - A|^2/2 + f(x)
//!   H(x, p, mu) = (p^2 - 2 Z A p - A^2) / (2 (1 + Z^2)) - f(x)

use crate::grid::{ControlField, ScalarField, TorusGrid};
use crate::models::{Aggregates, FieldSpec, KernelSpec, ModelError, StructuralConstants};

#[derive(Debug, Clone)]
pub struct Flocking {
    grid: TorusGrid,
    phi: KernelSpec,
    phi_table: Vec<f64>,
    f0: FieldSpec,
    f0_table: ScalarField,
    g0: FieldSpec,
    g_coupling: f64,
    constants: StructuralConstants,
}

impl Flocking {
    pub fn new(
        grid: TorusGrid,
        phi: KernelSpec,
        f0: FieldSpec,
        g0: FieldSpec,
        g_coupling: f64,
    ) -> Result<Self, ModelError> {
        phi.validate()?;
        let pm = phi.max_value();
        let pd = phi.max_deriv();
        // Measure sensitivity: only A varies with alpha at fixed m, and
        // |A(mu1) - A(mu2)| <= ||phi(x-.)||_{L^2(m)} ||a1 - a2||_{L^2(m)}
        //                   <= sqrt(pm Z) ||a1 - a2||_{L^2(m)},
        // so |H_p(mu1) - H_p(mu2)| <= Z sqrt(pm Z)/(1+Z^2) |.| and the declared
        // contraction constant is sqrt(pm) max_{z in [0, pm]} z^{3/2}/(1+z^2).
        // This bound is derived here, not taken from a published constant.
        let zstar = 3.0_f64.sqrt();
        let g = |z: f64| z.powf(1.5) / (1.0 + z * z);
        let lambda0 = pm.sqrt() * g(pm.min(zstar));
        if !(lambda0 < 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "flocking kernel is too strong: derived contraction constant {lambda0} >= 1 \
                 (max kernel value {pm})"
            )));
        }
        // Growth: |H_p| <= |p| + lambda0 Lambda_2 with c0 >= 1.
        // |H(x,0,mu)| = A^2/(2(1+Z^2)) + ||f|| <= (pm/4) Lambda^2 + ||f||,
        // using A^2 <= pm Z Lambda_2^2 and Z/(1+Z^2) <= 1/2.
        let lambda2 = 0.25 * pm;
        // |H_x|: chain rule with |A| <= pm L, |A_x| <= pd L, |Z| <= pm,
        // |Z_x| <= pd, Z/(1+Z^2) <= 1/2, Young products against 1 + p^2 + L^2:
        // |H_x| <= pd [(pm + (1+pm^2)/2) p^2 + (2 pm + pm^2) L^2] + ||f'||.
        let c0_b2 =
            f0.deriv_sup_bound() + pd * (pm + 0.5 * (1.0 + pm * pm)).max(2.0 * pm + pm * pm);
        let c0 = (1.0_f64).max(0.5 + f0.sup_bound()).max(c0_b2);
        // Duality: with w = Z alpha* - A and p = -(alpha* + Z w),
        // Cauchy-Schwarz gives p^2 <= (1+Z^2)(alpha*^2 + w^2), so
        // H_p p - H = (alpha*^2 + w^2)/2 + f >= p^2/(2(1+pm^2)) - ||f||.
        let c0_dual = 2.0 * (1.0 + pm * pm) + f0.sup_bound();
        let constants = StructuralConstants {
            q: 2.0,
            q0: 2.0,
            lambda0,
            c0,
            c0_dual,
            lambda1: 0.0,
            lambda2,
            g_bound: g0.sup_bound() + g_coupling.abs(),
            beta0: 1.0,
        };
        constants.validate()?;
        Ok(Self {
            grid,
            phi_table: phi.table(grid),
            phi,
            f0_table: f0.sample(grid),
            f0,
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

    pub fn phi(&self) -> &KernelSpec {
        &self.phi
    }

    /// Kernel mass Z(x_i) on the grid; depends on m only.
    pub fn normalization(&self, m: &ScalarField) -> ScalarField {
        let n = self.grid.n();
        let h = self.grid.h();
        let mut z = vec![0.0; n];
        for (i, slot) in z.iter_mut().enumerate() {
            let row = &self.phi_table[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * m[j];
            }
            *slot = acc * h;
        }
        ScalarField::new(self.grid, z)
    }

    /// Aggregates given the precomputed kernel mass.
    pub fn aggregates_with_normalization(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
        z: &ScalarField,
    ) -> Aggregates {
        let n = self.grid.n();
        let h = self.grid.h();
        let mut a = vec![0.0; n];
        for (i, slot) in a.iter_mut().enumerate() {
            let row = &self.phi_table[i * n..(i + 1) * n];
            let mut ai = 0.0;
            for j in 0..n {
                ai += alpha[j] * row[j] * m[j];
            }
            *slot = ai * h;
        }
        Aggregates::FlockingDrift {
            a: ScalarField::new(self.grid, a),
            z: z.clone(),
        }
    }

    pub fn aggregates(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<Aggregates, ModelError> {
        let z = self.normalization(m);
        Ok(self.aggregates_with_normalization(m, alpha, &z))
    }

    fn drift_at(&self, x: f64, m: &ScalarField, alpha: &ControlField) -> (f64, f64) {
        let n = self.grid.n();
        let h = self.grid.h();
        let mut a = 0.0;
        let mut z = 0.0;
        for j in 0..n {
            let k = self.phi.eval(x, self.grid.node(j));
            a += alpha[j] * k * m[j];
            z += k * m[j];
        }
        (a * h, z * h)
    }

    fn h_formula(&self, p: f64, a: f64, z: f64, f: f64) -> f64 {
        (p * p - 2.0 * z * a * p - a * a) / (2.0 * (1.0 + z * z)) - f
    }

    fn hp_formula(&self, p: f64, a: f64, z: f64) -> f64 {
        (p - z * a) / (1.0 + z * z)
    }

    fn unpack(agg: &Aggregates) -> Result<(&ScalarField, &ScalarField), ModelError> {
        match agg {
            Aggregates::FlockingDrift { a, z } => Ok((a, z)),
            _ => Err(ModelError::InvalidParameter(
                "flocking expects (A, Z) aggregates".into(),
            )),
        }
    }

    pub fn hamiltonian(&self, i: usize, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        let (a, z) = Self::unpack(agg)?;
        Ok(self.h_formula(p, a[i], z[i], self.f0_table[i]))
    }

    pub fn hamiltonian_p(&self, i: usize, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        let (a, z) = Self::unpack(agg)?;
        Ok(self.hp_formula(p, a[i], z[i]))
    }

    pub fn hamiltonian_at(
        &self,
        x: f64,
        p: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        let (a, z) = self.drift_at(x, m, alpha);
        Ok(self.h_formula(p, a, z, self.f0.eval(x)))
    }

    pub fn hamiltonian_p_at(
        &self,
        x: f64,
        p: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        let (a, z) = self.drift_at(x, m, alpha);
        Ok(self.hp_formula(p, a, z))
    }

    pub fn terminal_cost(&self, m_t: &ScalarField) -> ScalarField {
        let mut g = self.g0.sample(self.grid);
        if self.g_coupling != 0.0 {
            let smoothed = super::kernel_smooth(&self.phi, m_t);
            for i in 0..self.grid.n() {
                g[i] += self.g_coupling * smoothed[i];
            }
        }
        g
    }

    /// Replaces the declared constants (type invariants still enforced);
    /// meant for understated-constant fixtures and expert overrides.
    pub fn override_constants(&mut self, c: StructuralConstants) -> Result<(), ModelError> {
        c.validate()?;
        self.constants = c;
        Ok(())
    }
}
