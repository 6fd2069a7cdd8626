use thiserror::Error;

use crate::model::WorkPlan;

/// Errors produced by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A distribution no agent can sample at finite cost.
    #[error("unestimable distribution {dist}")]
    UnestimableDistribution { dist: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Brute-force enumeration guard tripped.
    #[error("search space too large: {points:.3e} grid points (limit {limit:.1e})")]
    SearchSpaceTooLarge { points: f64, limit: f64 },

    /// The iterative work-division solver hit its iteration cap without
    /// meeting the stationarity tolerance. Carries the best iterate found.
    #[error("solver stalled after {iterations} iterations (objective {objective})")]
    SolverStalled {
        iterations: usize,
        objective: f64,
        best: WorkPlan,
    },

    /// Cell parameters violate the preconditions of the corruption layer.
    #[error("cell not in corruption domain: {0}")]
    CellNotInCorruptionDomain(String),

    /// Bracket expansion failed to find a sign change for the corruption
    /// coefficient. Unreachable for cells in the corruption domain.
    #[error("no sign change while bracketing the corruption coefficient")]
    NoSignChange,

    /// A plan offered as a bargaining solution fails individual rationality.
    #[error("plan is not a bargaining solution: agent {agent} exceeds her individually rational penalty by {excess}")]
    NotBargainingSolution { agent: usize, excess: f64 },

    #[error("round counts before simulation: agent {agent}, distribution {dist} has count {count}")]
    NonIntegerCount { agent: usize, dist: usize, count: f64 },

    /// Discount estimator asked to remove everything it has.
    #[error("nothing to discount: own count {own} not below total count {total}")]
    NothingToDiscount { own: f64, total: f64 },

    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
