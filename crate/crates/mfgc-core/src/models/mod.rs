//! The Hamiltonian abstraction and the four concrete MFGC models: linear
//! demand (Bertrand/Cournot), negatively correlated resources, price impact
//! with bid/ask spread, crowd motion, and first-order flocking.
//!
//! Each model exposes H, H_p, its measure aggregates, the terminal cost, and
//! declared structural constants used by the fixed-point solver and the
//! diagnostic/assumption suites.

mod crowd;
mod field;
mod flocking;
mod linear_demand;
mod neg_corr;
mod price_impact;

pub use crowd::CrowdMotion;
pub use field::{FieldSpec, KernelSpec};
pub use flocking::Flocking;
pub use linear_demand::LinearDemand;
pub use neg_corr::{mean_control_solve, operator_norm, NegCorrResources};
pub use price_impact::PriceImpact;

use crate::grid::{integrate, ControlField, ScalarField, TorusGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mass floor used to decide membership in the support of a discrete density.
pub const SUPPORT_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unsupported model variant: {0}")]
    UnsupportedVariant(String),
    #[error("kernel normalization vanishes at node {node} (kernel degenerate on supp m)")]
    DegenerateKernel { node: usize },
    #[error("model does not declare the constant `{0}`")]
    MissingConstants(&'static str),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid joint measure: {0}")]
    InvalidMeasure(String),
    #[error("declared constants violate a structural inequality: {0}")]
    ConstantsInvariant(String),
}

/// Constants declared by a model for the structural inequalities:
/// growth/contraction of H_p, growth of H at p = 0, the convexity-duality
/// lower bound, and the smallness condition.
///
/// `c0` is the master constant of the growth inequalities (|H_p|, |H(x,0,mu)|,
/// |H_x| bounds) and the right-hand side of the smallness condition.
/// `c0_dual` is the constant of the convexity-duality lower bound
/// H_p.p - H >= c0_dual^{-1}(|p|^q - lambda1 Lambda^{q'}) - c0_dual; it also
/// multiplies lambda2 on the left of the smallness condition. The two play
/// different roles and coincide only for special Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    /// Asymptotic growth exponent of H in p (> 1).
    pub q: f64,
    /// Moment exponent of the measure coupling (>= 1, may be `f64::INFINITY`).
    pub q0: f64,
    /// Contraction constant of the measure fixed point, in [0, 1).
    pub lambda0: f64,
    /// Master growth constant (> 0).
    pub c0: f64,
    /// Convexity-duality constant (> 0).
    pub c0_dual: f64,
    /// Convexity defect coefficient (>= 0).
    pub lambda1: f64,
    /// Growth coefficient of H(x, 0, mu) in the control moment (>= 0).
    pub lambda2: f64,
    /// Uniform bound on the terminal cost |g(x, m)| (>= 0). Kept apart from
    /// `c0` so a large terminal cost does not shrink the lambda1 window,
    /// which is governed by the H_p growth constant alone.
    pub g_bound: f64,
    /// Hoelder exponent metadata, in (0, 1]; probes only, not asserted.
    pub beta0: f64,
}

impl StructuralConstants {
    /// Conjugate exponent q' = q/(q-1).
    pub fn q_prime(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.q > 1.0) {
            return Err(ModelError::ConstantsInvariant(format!(
                "q must exceed 1, got {}",
                self.q
            )));
        }
        if !(self.q0 >= 1.0) {
            return Err(ModelError::ConstantsInvariant(format!(
                "q0 must be >= 1, got {}",
                self.q0
            )));
        }
        if !(0.0..1.0).contains(&self.lambda0) {
            return Err(ModelError::ConstantsInvariant(format!(
                "lambda0 must lie in [0,1) for the fixed point to contract, got {}",
                self.lambda0
            )));
        }
        if !(self.c0 > 0.0) || !(self.c0_dual > 0.0) {
            return Err(ModelError::ConstantsInvariant(
                "c0 and c0_dual must be positive".into(),
            ));
        }
        let qp = self.q_prime();
        let bound = (1.0 - self.lambda0).powf(qp) / self.c0.powf(qp);
        if !(self.lambda1 >= 0.0 && self.lambda1 < bound) {
            return Err(ModelError::ConstantsInvariant(format!(
                "lambda1 = {} must lie in [0, (1-lambda0)^q'/c0^q') = [0, {bound})",
                self.lambda1
            )));
        }
        if !(self.lambda2 >= 0.0) {
            return Err(ModelError::ConstantsInvariant(
                "lambda2 must be nonnegative".into(),
            ));
        }
        if !(self.g_bound >= 0.0) {
            return Err(ModelError::ConstantsInvariant(
                "g_bound must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Discrete joint measure of states and controls: the pair (m, alpha)
/// representing the pushforward of the density m by (Id, alpha).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMeasure {
    m: ScalarField,
    alpha: ControlField,
}

impl JointMeasure {
    pub fn new(m: ScalarField, alpha: ControlField) -> Result<Self, ModelError> {
        if m.grid() != alpha.grid() {
            return Err(ModelError::InvalidMeasure(
                "density and control live on different grids".into(),
            ));
        }
        if m.min() < 0.0 {
            return Err(ModelError::InvalidMeasure(format!(
                "density has a negative node value {}",
                m.min()
            )));
        }
        let mass = integrate(&m);
        if (mass - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidMeasure(format!(
                "density mass {mass} deviates from 1 by more than 1e-12"
            )));
        }
        Ok(Self { m, alpha })
    }

    pub fn m(&self) -> &ScalarField {
        &self.m
    }

    pub fn alpha(&self) -> &ControlField {
        &self.alpha
    }

    pub fn grid(&self) -> TorusGrid {
        self.m.grid()
    }

    pub fn into_parts(self) -> (ScalarField, ControlField) {
        (self.m, self.alpha)
    }
}

/// Density-only precomputation for one time slice (see
/// [`Model::slice_context`]).
#[derive(Debug, Clone)]
pub enum SliceContext {
    Plain,
    Normalization(ScalarField),
}

/// Model-specific summary of the joint measure needed to evaluate H_p
/// pointwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregates {
    /// Scalar mean control.
    MeanControl { alpha_bar: f64 },
    /// Mean control plus the local cost slice f(x, m) sampled on the grid.
    MeanControlLocal {
        alpha_bar: f64,
        f_slice: ScalarField,
    },
    /// Mean control and the quadratic control moment.
    PriceImpact { alpha_bar: f64, lambda2: f64 },
    /// Normalized average drift V(., mu) on the grid.
    KernelDrift { v: ScalarField },
    /// Unnormalized weighted control mean A and kernel mass Z on the grid.
    FlockingDrift { a: ScalarField, z: ScalarField },
}

/// A MFGC model: Hamiltonian, aggregates, terminal cost and constants.
#[derive(Debug, Clone)]
pub enum Model {
    LinearDemand(LinearDemand),
    NegCorrResources(NegCorrResources),
    PriceImpact(PriceImpact),
    CrowdMotion(CrowdMotion),
    Flocking(Flocking),
}

impl Model {
    pub fn grid(&self) -> TorusGrid {
        match self {
            Model::LinearDemand(m) => m.grid(),
            Model::NegCorrResources(m) => m.grid(),
            Model::PriceImpact(m) => m.grid(),
            Model::CrowdMotion(m) => m.grid(),
            Model::Flocking(m) => m.grid(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::LinearDemand(_) => "linear_demand",
            Model::NegCorrResources(_) => "neg_corr_resources",
            Model::PriceImpact(_) => "price_impact",
            Model::CrowdMotion(_) => "crowd_motion",
            Model::Flocking(_) => "flocking",
        }
    }

    pub fn constants(&self) -> &StructuralConstants {
        match self {
            Model::LinearDemand(m) => m.constants(),
            Model::NegCorrResources(m) => m.constants(),
            Model::PriceImpact(m) => m.constants(),
            Model::CrowdMotion(m) => m.constants(),
            Model::Flocking(m) => m.constants(),
        }
    }

    /// The declared contraction constant of the measure fixed-point map.
    pub fn contraction_constant(&self) -> f64 {
        self.constants().lambda0
    }

    /// Computes the model aggregates of a joint measure.
    pub fn aggregates(&self, mu: &JointMeasure) -> Result<Aggregates, ModelError> {
        self.aggregates_from(mu.m(), mu.alpha())
    }

    /// Per-slice precomputation reused across the control iterates of the
    /// measure fixed point: the kernel normalizations depend on the density
    /// only, so the fixed-point loop computes them once per slice.
    pub fn slice_context(&self, m: &ScalarField) -> Result<SliceContext, ModelError> {
        match self {
            Model::CrowdMotion(md) => Ok(SliceContext::Normalization(md.normalization(m)?)),
            Model::Flocking(md) => Ok(SliceContext::Normalization(md.normalization(m))),
            _ => Ok(SliceContext::Plain),
        }
    }

    /// Like [`Model::aggregates_from`], reusing a slice context.
    pub fn aggregates_in(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
        ctx: &SliceContext,
    ) -> Result<Aggregates, ModelError> {
        match (self, ctx) {
            (Model::CrowdMotion(md), SliceContext::Normalization(z)) => {
                Ok(md.aggregates_with_normalization(m, alpha, z))
            }
            (Model::Flocking(md), SliceContext::Normalization(z)) => {
                Ok(md.aggregates_with_normalization(m, alpha, z))
            }
            _ => self.aggregates_from(m, alpha),
        }
    }

    /// Same as [`Model::aggregates`], from the raw (m, alpha) pair.
    pub fn aggregates_from(
        &self,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<Aggregates, ModelError> {
        match self {
            Model::LinearDemand(md) => md.aggregates(m, alpha),
            Model::NegCorrResources(md) => md.aggregates(m, alpha),
            Model::PriceImpact(md) => md.aggregates(m, alpha),
            Model::CrowdMotion(md) => md.aggregates(m, alpha),
            Model::Flocking(md) => md.aggregates(m, alpha),
        }
    }

    /// Hamiltonian H(x_i, p, mu) at grid node `i`.
    pub fn hamiltonian(&self, i: usize, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        match self {
            Model::LinearDemand(md) => md.hamiltonian(p, agg),
            Model::NegCorrResources(md) => md.hamiltonian(i, p, agg),
            Model::PriceImpact(md) => md.hamiltonian(i, p, agg),
            Model::CrowdMotion(md) => md.hamiltonian(i, p, agg),
            Model::Flocking(md) => md.hamiltonian(i, p, agg),
        }
    }

    /// dH/dp at grid node `i`.
    pub fn hamiltonian_p(&self, i: usize, p: f64, agg: &Aggregates) -> Result<f64, ModelError> {
        match self {
            Model::LinearDemand(md) => md.hamiltonian_p(p, agg),
            Model::NegCorrResources(md) => md.hamiltonian_p(p, agg),
            Model::PriceImpact(md) => md.hamiltonian_p(p, agg),
            Model::CrowdMotion(md) => md.hamiltonian_p(i, p, agg),
            Model::Flocking(md) => md.hamiltonian_p(i, p, agg),
        }
    }

    /// Hamiltonian at an arbitrary coordinate x (not necessarily a node),
    /// with aggregates computed directly from (m, alpha). O(n) per call for
    /// kernel models; used by the assumption sampler and derivative oracles.
    pub fn hamiltonian_at(
        &self,
        x: f64,
        p: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        match self {
            Model::LinearDemand(md) => {
                let agg = md.aggregates(m, alpha)?;
                md.hamiltonian(p, &agg)
            }
            Model::NegCorrResources(md) => md.hamiltonian_at(x, p, m, alpha),
            Model::PriceImpact(md) => md.hamiltonian_at(x, p, m, alpha),
            Model::CrowdMotion(md) => md.hamiltonian_at(x, p, m, alpha),
            Model::Flocking(md) => md.hamiltonian_at(x, p, m, alpha),
        }
    }

    /// dH/dp at an arbitrary coordinate x, like [`Model::hamiltonian_at`].
    pub fn hamiltonian_p_at(
        &self,
        x: f64,
        p: f64,
        m: &ScalarField,
        alpha: &ControlField,
    ) -> Result<f64, ModelError> {
        match self {
            Model::LinearDemand(md) => {
                let agg = md.aggregates(m, alpha)?;
                md.hamiltonian_p(p, &agg)
            }
            Model::NegCorrResources(md) => md.hamiltonian_p_at(p, m, alpha),
            Model::PriceImpact(md) => md.hamiltonian_p_at(p, m, alpha),
            Model::CrowdMotion(md) => md.hamiltonian_p_at(x, p, m, alpha),
            Model::Flocking(md) => md.hamiltonian_p_at(x, p, m, alpha),
        }
    }

    /// Terminal cost g(., m_T) sampled on the grid.
    pub fn terminal_cost(&self, m_t: &ScalarField) -> ScalarField {
        match self {
            Model::LinearDemand(md) => md.terminal_cost(m_t),
            Model::NegCorrResources(md) => md.terminal_cost(m_t),
            Model::PriceImpact(md) => md.terminal_cost(m_t),
            Model::CrowdMotion(md) => md.terminal_cost(m_t),
            Model::Flocking(md) => md.terminal_cost(m_t),
        }
    }

    /// Natural bound on |alpha| for sampled assumption checks. The declared
    /// growth constants are derived for control fields within this range.
    pub fn sampling_control_bound(&self) -> f64 {
        match self {
            Model::LinearDemand(_) | Model::NegCorrResources(_) => 1.0,
            _ => 2.0,
        }
    }

    /// Replaces the declared constants (type invariants still enforced);
    /// meant for understated-constant fixtures and expert overrides.
    pub fn override_constants(&mut self, c: StructuralConstants) -> Result<(), ModelError> {
        match self {
            Model::LinearDemand(m) => m.override_constants(c),
            Model::NegCorrResources(m) => m.override_constants(c),
            Model::PriceImpact(m) => m.override_constants(c),
            Model::CrowdMotion(m) => m.override_constants(c),
            Model::Flocking(m) => m.override_constants(c),
        }
    }
}

/// Mean control integral: sum_i alpha_i m_i h.
pub(crate) fn mean_control(m: &ScalarField, alpha: &ControlField) -> f64 {
    let h = m.grid().h();
    m.values()
        .iter()
        .zip(alpha.values())
        .map(|(mi, ai)| mi * ai)
        .sum::<f64>()
        * h
}

/// Piecewise-linear evaluation of a nodal field at an arbitrary coordinate.
pub(crate) fn interp_periodic(f: &ScalarField, x: f64) -> f64 {
    let n = f.grid().n();
    let xn = (x.rem_euclid(1.0)) * n as f64;
    let i = xn.floor() as usize % n;
    let frac = xn - xn.floor();
    let j = (i + 1) % n;
    f[i] * (1.0 - frac) + f[j] * frac
}

/// Row-normalized kernel smoothing of a density: out_i = sum_j khat(x_i, x_j) m_j h
/// with khat = k / (sum_j k(x_i, x_j) h), so a uniform density maps to 1.
pub(crate) fn kernel_smooth(kernel: &KernelSpec, m: &ScalarField) -> ScalarField {
    let grid = m.grid();
    let n = grid.n();
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let xi = grid.node(i);
        let mut num = 0.0;
        let mut row = 0.0;
        for j in 0..n {
            let k = kernel.eval(xi, grid.node(j));
            num += k * m[j];
            row += k;
        }
        *slot = if row > 0.0 { num / row } else { 0.0 };
    }
    ScalarField::new(grid, out)
}
