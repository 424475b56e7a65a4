//! Solver library for second-order mean field games of controls on the 1-D
//! torus: the coupled backward HJB / forward FPK system with a per-slice
//! contraction fixed point on the joint state-control measure.
//!
//! Modules:
//! - [`grid`]: periodic meshes, difference and quadrature kernels, the cyclic
//!   tridiagonal solver behind the implicit diffusion steps.
//! - [`models`]: the Hamiltonian abstraction and the concrete models
//!   (linear-demand competition, correlated resources, price impact, crowd
//!   motion, flocking).
//! - [`mufix`]: the per-slice Banach fixed point defining the joint measure,
//!   with radial truncation of the control.
//! - [`pde`]: semi-implicit HJB and conservative FPK steps and full sweeps.
//! - [`coupler`]: the outer damped Picard iteration and its result type.
//! - [`diagnostics`]: a priori estimates asserted on solve results.
//! - [`assumptions`]: sampled falsification of the structural assumptions and
//!   the optimal-control machinery of the crowd-motion analysis.
//!
//! ```
//! use mfgc_core::coupler::{solve, SolverConfig};
//! use mfgc_core::grid::{ScalarField, TimeGrid, TorusGrid};
//! use mfgc_core::models::{FieldSpec, LinearDemand, Model};
//!
//! let grid = TorusGrid::new(64)?;
//! let model =
//!     Model::LinearDemand(LinearDemand::new(grid, 1.0, FieldSpec::cosine(1, 0.3), 0.0)?);
//! let tgrid = TimeGrid::new(0.5, 64)?;
//! let m0 = ScalarField::from_fn(grid, |x| 1.0 + 0.5 * (std::f64::consts::TAU * x).cos());
//! let result = solve(&model, &tgrid, &m0, &SolverConfig::new(0.05))?;
//! assert!(result.converged);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

// `!(x > 0.0)`-style guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod coupler;
pub mod diagnostics;
pub mod grid;
pub mod models;
pub mod mufix;
pub mod pde;

pub use coupler::{solve, solve_with_continuation, SolveResult, SolverConfig};
pub use grid::{ControlField, ScalarField, TimeGrid, TorusGrid};
pub use models::{JointMeasure, Model};
