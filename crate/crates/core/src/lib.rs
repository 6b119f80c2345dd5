//! Problem-driven scenario reduction for two-stage stochastic programs with a
//! CVaR risk term.
//!
//! The crate is organised around the pipeline used to reduce a large set of
//! weighted scenarios to a handful of representatives while keeping the
//! optimal decision of the reduced problem close to that of the full one:
//!
//! * [`scenario`] holds the scenario containers and their JSON formats.
//! * [`risk`] implements discrete VaR/CVaR arithmetic.
//! * [`milp`] is a small solver-agnostic MILP layer (HiGHS plus an exhaustive
//!   oracle for tiny models).
//! * [`vpp`] is the virtual power plant day-ahead offering problem used as the
//!   benchmark stochastic program.
//! * [`ipdsr`] is the iterative problem-driven reduction engine.
//! * [`pdsr`] is the bound-minimising formulation, usable for small sets only.
//! * [`baselines`] holds the distribution-driven reductions (k-means and
//!   hierarchical clustering).
//! * [`evaluation`] computes ex-post indices and comparison reports.
//! * [`datagen`] generates seeded synthetic scenario sets.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod ipdsr;
pub mod milp;
pub mod pdsr;
pub mod risk;
pub mod scenario;
pub mod vpp;

pub use error::{Error, Result};
pub use risk::{ProjectedObjectives, RiskDecomposition, RiskParams};
pub use scenario::{ReducedScenarioSet, Scenario, ScenarioSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
