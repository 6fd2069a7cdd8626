//! Collaborative Gaussian mean estimation with strategic agents.
//!
//! A group of agents wants to estimate a vector of means, drawing samples
//! from per-coordinate normal distributions at heterogeneous (possibly
//! infinite) per-sample costs. This crate implements the pieces needed to
//! divide the collection work and to allocate estimates back so that
//! truthful reporting is a Nash equilibrium:
//!
//! - [`model`]: instances, work plans, individually-rational baselines and
//!   penalties under the compliant sample-mean benchmark.
//! - [`bargaining`]: the utilitarian division of work, a brute-force grid
//!   oracle, the enforceable-plan adjustment, and the per-distribution
//!   sharing condition that gates the corruption branch.
//! - [`corruption`]: the special-function layer — the corruption-coefficient
//!   equation and its root solver, closed-form penalties, and quadrature.
//! - [`mechanisms`]: the sample-mean mechanism and the corrupt-based-on-
//!   leverage (CBL) mechanism as data-in/allocation-out procedures.
//! - [`agents`]: parametric strategy families (fabrication, withholding,
//!   free-rider discounting) used to probe the mechanisms.
//! - [`sim`]: Monte Carlo games, analytic penalty tables, incentive sweeps,
//!   efficiency reports, and the worst-case instance generator.
//!
//! All randomized operations take explicit seeds and are bit-reproducible.

pub mod agents;
pub mod bargaining;
pub mod config;
pub mod corruption;
mod error;
pub mod mechanisms;
pub mod model;
pub(crate) mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{Instance, PenaltyBreakdown, PlanApprox, Provenance, WorkPlan};
