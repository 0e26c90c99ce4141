//! Numerical machinery for p-gradient flows in metric spaces.
//!
//! The crate is organized around a small set of space-agnostic primitives
//! (trajectories, energy oracles, minimizing movements) and two concrete
//! state spaces where everything can be driven end to end:
//!
//! - [`tvflow`]: total-variation flow on uniform grids in L^2, with exact
//!   1D proximal steps (taut string) and dual-projection steps in 2D;
//! - [`wflow1d`]: 1D p-Wasserstein flows of free energies in quantile
//!   coordinates, where the transport distance is a plain integral.
//!
//! On top of the solvers sit the certification layers:
//!
//! - [`klcert`]: level-set slope profiles, discrete talweg chains, and
//!   piecewise-linear growth-function certificates for gradient
//!   (Kurdyka-Lojasiewicz type) inequalities;
//! - [`rates`]: closed-form decay and extinction predictions from a fitted
//!   Lojasiewicz exponent, plus trajectory comparison;
//! - [`wflow1d::audit_inequalities`]: entropy-transportation, Talagrand,
//!   log-Sobolev and HWI checks with their exact constants.

// Negated float comparisons (`!(x > 0.0)`) are used as NaN-rejecting
// guards throughout; `&Vec<f64>` appears in distance signatures because
// the generic state type of trajectories over R^d is `Vec<f64>` itself.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::ptr_arg)]

pub mod gauss;
pub mod klcert;
pub mod metric;
pub mod mms;
pub mod rates;
pub mod tvflow;
pub mod wflow1d;

mod isotone;

pub use metric::{DissipationReport, EnergyOracle, FnOracle, Trajectory};
pub use mms::{MmConfig, ProxOracle, RefineStudy};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for trajectory of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("proximal solve failed to reach tolerance: achieved gap {achieved}, required {required}")]
    ProxTolerance { achieved: f64, required: f64 },

    #[error("inner solver stagnated after {iters} iterations (residual {residual})")]
    SolverStagnation { iters: usize, residual: f64 },

    #[error("Sard condition violated: bin {bin} has zero minimal slope")]
    SardViolation { bin: usize },

    #[error("no positive-entropy samples in cloud")]
    EmptyCloud,

    #[error("sample {index} lies outside the certificate region")]
    OutsideRegion { index: usize },

    #[error("equilibrium residual {residual} exceeds threshold {threshold}; audit refused")]
    EquilibriumResidual { residual: f64, threshold: f64 },

    #[error("audit requires a geodesically convex instance (declared lambda = {lambda})")]
    NotConvex { lambda: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tolerance for energy-monotonicity assertions on solver trajectories.
///
/// Inner solvers are inexact; a flow step may raise the energy by up to its
/// optimality gap. Scaled by the initial energy magnitude.
pub fn tau_mono(e0: f64) -> f64 {
    1e-10 * e0.abs().max(1.0)
}
