//! Domain types and the baseline quantities everything else consumes:
//! individually-rational penalties, compliant-profile penalties, and the
//! social penalty.
//!
//! Costs are extended positive reals: `f64::INFINITY` marks a distribution
//! an agent cannot sample. Sample counts are nonnegative reals everywhere in
//! the planning and analytic paths; rounding to integers happens only at the
//! simulation boundary (see [`crate::sim`]).

use crate::error::{Error, Result};

/// `c * n` with the convention that a zero count never incurs cost, even at
/// infinite unit cost (avoids `0 * inf = NaN`).
pub(crate) fn cost_term(cost: f64, count: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        cost * count
    }
}

/// `sigma^2 / total` with `sigma^2 / 0 = +inf`.
pub(crate) fn error_term(sigma: f64, total: f64) -> f64 {
    if total == 0.0 {
        f64::INFINITY
    } else {
        sigma * sigma / total
    }
}

/// A problem instance: the shared noise scale and the cost matrix.
///
/// Invariants (checked at construction): `sigma > 0`, every cost is `> 0`
/// (infinity allowed), and every distribution has at least one agent with
/// finite cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    sigma: f64,
    costs: Vec<Vec<f64>>,
}

impl Instance {
    /// Validates a raw cost matrix and noise scale.
    pub fn new(costs: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        if costs.is_empty() || costs[0].is_empty() {
            return Err(Error::InvalidParameter(
                "cost matrix must have at least one agent and one distribution".into(),
            ));
        }
        let d = costs[0].len();
        if costs.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidParameter(
                "cost matrix must be rectangular".into(),
            ));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma must be a positive finite real, got {sigma}"
            )));
        }
        for (i, row) in costs.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                if c.is_nan() || c <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "cost for agent {}, distribution {} must be positive, got {c}",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        for k in 0..d {
            if costs.iter().all(|row| row[k].is_infinite()) {
                return Err(Error::UnestimableDistribution { dist: k + 1 });
            }
        }
        Ok(Instance { sigma, costs })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Number of agents `m`.
    pub fn agents(&self) -> usize {
        self.costs.len()
    }

    /// Number of distributions `d`.
    pub fn dists(&self) -> usize {
        self.costs[0].len()
    }

    pub fn cost(&self, agent: usize, dist: usize) -> f64 {
        self.costs[agent][dist]
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    /// The count minimizing `sigma^2/n + c*n` for one cell, `sigma/sqrt(c)`.
    /// `None` when the agent cannot sample the distribution at all.
    pub fn n_ir(&self, agent: usize, dist: usize) -> Option<f64> {
        let c = self.costs[agent][dist];
        if c.is_infinite() {
            None
        } else {
            Some(self.sigma / c.sqrt())
        }
    }

    /// The best penalty the agent can reach working alone:
    /// `2*sigma*sum_k sqrt(c_ik)` when her whole row is finite, infinite
    /// otherwise.
    pub fn p_ir(&self, agent: usize) -> f64 {
        let row = &self.costs[agent];
        if row.iter().any(|c| c.is_infinite()) {
            f64::INFINITY
        } else {
            2.0 * self.sigma * row.iter().map(|c| c.sqrt()).sum::<f64>()
        }
    }

    /// All agents achieving the minimum cost for `dist` (ties included).
    pub fn cheapest_agents(&self, dist: usize) -> Vec<usize> {
        let min = self
            .costs
            .iter()
            .map(|row| row[dist])
            .fold(f64::INFINITY, f64::min);
        (0..self.agents())
            .filter(|&i| self.costs[i][dist] == min)
            .collect()
    }
}

/// A division of work: how many samples each agent collects per
/// distribution. Entries are finite nonnegative reals, and zero wherever the
/// instance cost is infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkPlan {
    counts: Vec<Vec<f64>>,
}

impl WorkPlan {
    pub fn new(counts: Vec<Vec<f64>>, inst: &Instance) -> Result<Self> {
        if counts.len() != inst.agents() || counts.iter().any(|r| r.len() != inst.dists()) {
            return Err(Error::InvalidParameter(format!(
                "plan shape must be {}x{}",
                inst.agents(),
                inst.dists()
            )));
        }
        for (i, row) in counts.iter().enumerate() {
            for (k, &n) in row.iter().enumerate() {
                if !n.is_finite() || n < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "count for agent {}, distribution {} must be a finite nonnegative real, got {n}",
                        i + 1,
                        k + 1
                    )));
                }
                if n > 0.0 && inst.cost(i, k).is_infinite() {
                    return Err(Error::InvalidParameter(format!(
                        "agent {} cannot collect from distribution {} (infinite cost) but has count {n}",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(WorkPlan { counts })
    }

    /// Construction for internal algorithms whose outputs satisfy the
    /// invariants by construction.
    pub(crate) fn from_raw(counts: Vec<Vec<f64>>) -> Self {
        WorkPlan { counts }
    }

    pub fn get(&self, agent: usize, dist: usize) -> f64 {
        self.counts[agent][dist]
    }

    pub fn counts(&self) -> &[Vec<f64>] {
        &self.counts
    }

    pub fn agents(&self) -> usize {
        self.counts.len()
    }

    pub fn dists(&self) -> usize {
        self.counts[0].len()
    }

    /// Total count collected for `dist` across all agents.
    pub fn column_total(&self, dist: usize) -> f64 {
        self.counts.iter().map(|row| row[dist]).sum()
    }
}

/// Output of the enforceable-plan adjustment (see
/// [`crate::bargaining::compute_bargaining_approx`]): the adjusted plan, the
/// per-distribution sets of agents who work alone and receive no new data,
/// and the per-distribution totals frozen after the first adjustment pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanApprox {
    pub n_tilde: WorkPlan,
    /// For each distribution, the sorted agents working alone on it.
    pub donating: Vec<Vec<usize>>,
    /// Column totals frozen after the first pass; not recomputed afterwards.
    pub totals: Vec<f64>,
    /// Cell updates applied by each pass (each is at most `m*d`).
    pub loop1_updates: usize,
    pub loop2_updates: usize,
}

impl PlanApprox {
    pub fn is_donating(&self, agent: usize, dist: usize) -> bool {
        self.donating[dist].binary_search(&agent).is_ok()
    }
}

/// How a penalty table was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Analytic,
    MonteCarlo {
        replications: u64,
        /// Per-cell standard error of the estimation-error average.
        std_error: Vec<Vec<f64>>,
    },
}

/// Per-agent, per-distribution penalties: estimation error plus collection
/// cost. `per_agent` and `social` are exact sums of `per_cell`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBreakdown {
    pub per_cell: Vec<Vec<f64>>,
    pub per_agent: Vec<f64>,
    pub social: f64,
    pub provenance: Provenance,
}

impl PenaltyBreakdown {
    pub fn from_cells(per_cell: Vec<Vec<f64>>, provenance: Provenance) -> Self {
        let per_agent: Vec<f64> = per_cell.iter().map(|row| row.iter().sum()).collect();
        let social = per_agent.iter().sum();
        PenaltyBreakdown {
            per_cell,
            per_agent,
            social,
            provenance,
        }
    }
}

/// Penalties when every agent follows `plan`, submits truthfully, and
/// accepts the pooled sample mean: per cell,
/// `sigma^2 / sum_j n_jk + c_ik * n_ik` (infinite when the column is empty).
pub fn compliant_penalty(inst: &Instance, plan: &WorkPlan) -> PenaltyBreakdown {
    let mut per_cell = vec![vec![0.0; inst.dists()]; inst.agents()];
    for k in 0..inst.dists() {
        let total = plan.column_total(k);
        for (i, row) in per_cell.iter_mut().enumerate() {
            row[k] = error_term(inst.sigma(), total) + cost_term(inst.cost(i, k), plan.get(i, k));
        }
    }
    PenaltyBreakdown::from_cells(per_cell, Provenance::Analytic)
}

/// Per-agent individual-rationality report for a plan under the compliant
/// sample-mean benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct IrReport {
    pub is_solution: bool,
    /// `p_ir(i) - p_i(plan)`; infinite when the agent's solo penalty is
    /// itself infinite (the constraint is then vacuous).
    pub slack: Vec<f64>,
}

/// A plan is a bargaining solution when the compliant penalty of every agent
/// is no worse than her solo optimum.
pub fn is_bargaining_solution(inst: &Instance, plan: &WorkPlan) -> IrReport {
    let pens = compliant_penalty(inst, plan);
    let mut ok = true;
    let mut slack = Vec::with_capacity(inst.agents());
    for i in 0..inst.agents() {
        let pir = inst.p_ir(i);
        let s = if pir.is_infinite() {
            f64::INFINITY
        } else {
            pir - pens.per_agent[i]
        };
        if pens.per_agent[i] > pir {
            ok = false;
        }
        slack.push(s);
    }
    IrReport {
        is_solution: ok,
        slack,
    }
}
