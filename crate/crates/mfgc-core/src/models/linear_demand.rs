//! Bertrand competition with linear demand: each producer controls her
//! selling price, the demand couples through the mean price of the crowd.
//!
//! H(p, mu) = (p + w abar - r)^2 / 4 with w = eps/(1+eps), r = 1/(1+eps),
//! where abar is the mean control of mu and eps >= 0 is the competition
//! degree (eps = 0 is a monopoly, the Hamiltonian decouples from mu).

use crate::grid::{ControlField, ScalarField, TorusGrid};
use crate::models::{mean_control, Aggregates, FieldSpec, ModelError, StructuralConstants};

#[derive(Debug, Clone)]
pub struct LinearDemand {
    grid: TorusGrid,
    eps: f64,
    g0: FieldSpec,
    /// Weight of the density term in g(x, m) = g0(x) + g_coupling * m(x).
    g_coupling: f64,
    constants: StructuralConstants,
}

impl LinearDemand {
    pub fn new(
        grid: TorusGrid,
        eps: f64,
        g0: FieldSpec,
        g_coupling: f64,
    ) -> Result<Self, ModelError> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "competition degree eps must be a finite nonnegative real, got {eps}"
            )));
        }
        let lambda0 = eps / (2.0 * (1.0 + eps));
        // c0 = 1/2 settles the H_p growth bound: |H_p| <= (|p| + 1)/2 + lambda0 |abar|.
        // The H(x,0,mu) bound with lambda2 = 0 needs |w abar - r| <= 2 sqrt(c0),
        // which holds for |abar| <= 1 (the declared sampling range; the
        // equilibrium controls are prices in [0, 1/2]).
        let constants = StructuralConstants {
            q: 2.0,
            q0: 1.0,
            lambda0,
            c0: 0.5,
            // Duality bound: H_p p - H = (p^2 - c^2)/4 with c = w abar - r,
            // c^2 <= (2 lambda0 |abar| + 1)^2 <= lambda1 |abar|^2 / ... absorbed
            // with c0_dual = 4 and lambda1 = 1 for every eps (t = 4 lambda0^2 < 1).
            c0_dual: 4.0,
            lambda1: 1.0,
            lambda2: 0.0,
            g_bound: g0.sup_bound() + g_coupling.abs(),
            beta0: 1.0,
        };
        constants.validate()?;
        Ok(Self {
            grid,
            eps,
            g0,
            g_coupling,
            constants,
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn constants(&self) -> &StructuralConstants {
        &self.constants
    }

    /// Coupling coefficient w = eps / (1 + eps) multiplying the mean control.
    pub fn coupling_weight(&self) -> f64 {
        self.eps / (1.0 + self.eps)
    }

    /// Demand intercept r = 1 / (1 + eps).
    pub fn intercept(&self) -> f64 {
        1.0 / (1.0 + self.eps)
    }

    fn shifted(&self, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        match agg {
            Aggregates::MeanControl { alpha_bar } => {
                Ok(p + self.coupling_weight() * alpha_bar - self.intercept())
            }
            _ => Err(ModelError::InvalidParameter(
                "linear demand expects mean-control aggregates".into(),
            )),
        }
    }

    pub fn aggregates(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<Aggregates, ModelError> {
        Ok(Aggregates::MeanControl {
            alpha_bar: mean_control(m, alpha),
        })
    }

    pub fn hamiltonian(&self, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        let z = self.shifted(p, agg)?;
        Ok(0.25 * z * z)
    }

    pub fn hamiltonian_p(&self, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        Ok(0.5 * self.shifted(p, agg)?)
    }

    pub fn terminal_cost(&self, m_t: &ScalarField) -> ScalarField {
        let mut g = self.g0.sample(self.grid);
        if self.g_coupling != 0.0 {
            for i in 0..self.grid.n() {
                g[i] += self.g_coupling * m_t[i];
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
