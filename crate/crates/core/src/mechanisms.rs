//! The two mechanisms as data-in/allocation-out procedures: the pooled
//! sample mean, and corrupt-based-on-leverage (CBL), which validates each
//! agent's submission against a clean subsample of the others' data and
//! noises the remainder proportionally to the observed gap.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal};

use crate::agents::{AgentStrategy, EstimatorRule, StrategyProfile, SubmissionRule};
use crate::bargaining::{check_favorable, compute_bargaining_approx};
use crate::corruption::{solve_alpha, CellParams, ALPHA_TOL};
use crate::error::{Error, Result};
use crate::model::{Instance, WorkPlan};
use crate::rng::{stream, TAG_CELL};

/// Per-agent, per-distribution submitted sample lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Submissions {
    data: Vec<Vec<Vec<f64>>>,
}

impl Submissions {
    pub fn new(data: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if data.is_empty() || data[0].is_empty() {
            return Err(Error::InvalidParameter(
                "submissions need at least one agent and one distribution".into(),
            ));
        }
        let d = data[0].len();
        if data.iter().any(|a| a.len() != d) {
            return Err(Error::InvalidParameter(
                "submissions must be rectangular over agents and distributions".into(),
            ));
        }
        for (i, agent) in data.iter().enumerate() {
            for (k, points) in agent.iter().enumerate() {
                if points.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "submission of agent {} for distribution {} contains a non-finite value",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Submissions { data })
    }

    pub fn agents(&self) -> usize {
        self.data.len()
    }

    pub fn dists(&self) -> usize {
        self.data[0].len()
    }

    pub fn get(&self, agent: usize, dist: usize) -> &[f64] {
        &self.data[agent][dist]
    }

    /// Everyone else's points for `dist`, concatenated in agent order.
    pub fn others(&self, agent: usize, dist: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for (j, a) in self.data.iter().enumerate() {
            if j != agent {
                out.extend_from_slice(&a[dist]);
            }
        }
        out
    }
}

/// Which rule produced an allocation coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    /// Sample mean of the agent's own submission.
    OwnMean,
    /// Sample mean of the other agents' pooled submissions.
    OthersMean,
    /// Precision-weighted mean of clean and corrupted data.
    Corrupted {
        alpha: f64,
        eta_sq: f64,
        clean_count: usize,
        corrupt_count: usize,
    },
    /// Pooled mean over all submissions (sample-mean mechanism).
    PooledMean,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::OwnMean => "own_mean",
            Branch::OthersMean => "others_mean",
            Branch::Corrupted { .. } => "corrupted",
            Branch::PooledMean => "pooled_mean",
        }
    }
}

/// One allocation coordinate. `defined` is false when the pool the rule
/// needed was empty; the value is then 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationCell {
    pub value: f64,
    pub defined: bool,
    pub branch: Branch,
}

/// Per-agent estimates returned by a mechanism, with per-cell diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub cells: Vec<Vec<AllocationCell>>,
}

impl Allocation {
    /// The estimate vector handed to an agent.
    pub fn estimate(&self, agent: usize) -> Vec<f64> {
        self.cells[agent].iter().map(|c| c.value).collect()
    }

    /// CSV with header `agent,dist,value,branch,alpha,eta_sq` (1-based
    /// indices; alpha and eta_sq empty outside the corrupted branch).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,dist,value,branch,alpha,eta_sq\n");
        for (i, row) in self.cells.iter().enumerate() {
            for (k, cell) in row.iter().enumerate() {
                let (alpha, eta) = match &cell.branch {
                    Branch::Corrupted { alpha, eta_sq, .. } => {
                        (format!("{alpha}"), format!("{eta_sq}"))
                    }
                    _ => (String::new(), String::new()),
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i + 1,
                    k + 1,
                    cell.value,
                    cell.branch.label(),
                    alpha,
                    eta
                ));
            }
        }
        out
    }
}

fn mean(points: &[f64]) -> Option<f64> {
    if points.is_empty() {
        None
    } else {
        Some(points.iter().sum::<f64>() / points.len() as f64)
    }
}

fn mean_cell(points: &[f64], branch: Branch) -> AllocationCell {
    match mean(points) {
        Some(v) => AllocationCell {
            value: v,
            defined: true,
            branch,
        },
        None => AllocationCell {
            value: 0.0,
            defined: false,
            branch,
        },
    }
}

/// Pooled sample mean per distribution, identical for every agent. No
/// validation whatsoever; fabricated submissions shift the pool.
pub fn sample_mean_allocate(subs: &Submissions) -> Allocation {
    let (m, d) = (subs.agents(), subs.dists());
    let pooled: Vec<AllocationCell> = (0..d)
        .map(|k| {
            let mut all = Vec::new();
            for i in 0..m {
                all.extend_from_slice(subs.get(i, k));
            }
            mean_cell(&all, Branch::PooledMean)
        })
        .collect();
    Allocation {
        cells: vec![pooled; m],
    }
}

/// Draws `count` elements without replacement; returns (chosen, remaining
/// in original order). Deterministic given the generator state.
fn sample_without_replacement(
    points: &[f64],
    count: usize,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    let count = count.min(points.len());
    let mut index: Vec<usize> = (0..points.len()).collect();
    for t in 0..count {
        let j = rng.random_range(t..index.len());
        index.swap(t, j);
    }
    let chosen: Vec<f64> = index[..count].iter().map(|&ix| points[ix]).collect();
    let mut taken = vec![false; points.len()];
    for &ix in &index[..count] {
        taken[ix] = true;
    }
    let remaining: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(ix, _)| !taken[*ix])
        .map(|(_, &x)| x)
        .collect();
    (chosen, remaining)
}

fn round_count(x: f64) -> usize {
    let r = x.round_ties_even();
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}

/// The corrupted-branch allocation for one cell, with an explicit
/// generator. `own` is the agent's submission, `others` the pool it is
/// validated against.
pub(crate) fn corrupted_cell(
    own: &[f64],
    others: &[f64],
    n_star: f64,
    t_prime: f64,
    alpha: f64,
    sigma: f64,
    rng: &mut impl Rng,
) -> AllocationCell {
    let want_validation = round_count(t_prime - n_star);
    let (y_prime, _) = sample_without_replacement(others, want_validation, rng);
    let (clean, rest) = sample_without_replacement(&y_prime, round_count(n_star), rng);

    let eta_sq = match (mean(own), mean(&clean)) {
        (Some(own_mean), Some(clean_mean)) => {
            let gap = own_mean - clean_mean;
            alpha * alpha * gap * gap
        }
        // Nothing submitted (or nothing to validate against): corrupted
        // points carry no weight.
        _ => f64::INFINITY,
    };

    let sigma2 = sigma * sigma;
    let (mut num, mut den) = (0.0, 0.0);
    for &y in own.iter().chain(&clean) {
        num += y / sigma2;
        den += 1.0 / sigma2;
    }
    if eta_sq.is_finite() {
        let noise = Normal::new(0.0, eta_sq.sqrt()).expect("eta >= 0");
        for &z in &rest {
            let corrupted = z + noise.sample(rng);
            num += corrupted / (sigma2 + eta_sq);
            den += 1.0 / (sigma2 + eta_sq);
        }
    }
    if den == 0.0 {
        return AllocationCell {
            value: 0.0,
            defined: false,
            branch: Branch::Corrupted {
                alpha,
                eta_sq,
                clean_count: clean.len(),
                corrupt_count: rest.len(),
            },
        };
    }
    AllocationCell {
        value: num / den,
        defined: true,
        branch: Branch::Corrupted {
            alpha,
            eta_sq,
            clean_count: clean.len(),
            corrupt_count: rest.len(),
        },
    }
}

/// The CBL mechanism. Runs the enforceable-plan adjustment and the
/// per-distribution sharing check internally, then allocates per cell:
///
/// - sharing holds: agents working alone get their own mean; agents with a
///   zero adjusted count get the others' mean; every other agent gets the
///   precision-weighted mean of a clean validation subsample and the
///   remaining points corrupted with noise scaled by her coefficient and
///   the gap between her submission mean and the clean subsample mean;
/// - otherwise: the cheapest collectors for each distribution get their own
///   mean, everyone else the others' mean.
///
/// All randomness is drawn from per-cell streams derived from `seed` and
/// `(agent, dist)`.
pub fn cbl_allocate(
    inst: &Instance,
    n_bar: &WorkPlan,
    subs: &Submissions,
    seed: u64,
) -> Result<Allocation> {
    let (m, d) = (inst.agents(), inst.dists());
    if subs.agents() != m || subs.dists() != d {
        return Err(Error::InvalidParameter(format!(
            "submissions shape must be {m}x{d}"
        )));
    }
    let approx = compute_bargaining_approx(inst, n_bar);
    let favorable = check_favorable(inst, n_bar).favorable;

    let mut cells = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = Vec::with_capacity(d);
        for k in 0..d {
            let cell = if favorable {
                if approx.is_donating(i, k) {
                    mean_cell(subs.get(i, k), Branch::OwnMean)
                } else if approx.n_tilde.get(i, k) == 0.0 {
                    mean_cell(&subs.others(i, k), Branch::OthersMean)
                } else {
                    let params = CellParams::new(
                        approx.n_tilde.get(i, k),
                        approx.totals[k],
                        inst.cost(i, k),
                        inst.sigma(),
                    )?;
                    let alpha = solve_alpha(&params, ALPHA_TOL)?;
                    let mut rng = stream(seed, &[TAG_CELL, i as u64, k as u64]);
                    corrupted_cell(
                        subs.get(i, k),
                        &subs.others(i, k),
                        params.n_star,
                        params.t_prime,
                        alpha.value,
                        inst.sigma(),
                        &mut rng,
                    )
                }
            } else if inst.cheapest_agents(k).contains(&i) {
                mean_cell(subs.get(i, k), Branch::OwnMean)
            } else {
                mean_cell(&subs.others(i, k), Branch::OthersMean)
            };
            row.push(cell);
        }
        cells.push(row);
    }
    Ok(Allocation { cells })
}

/// The strategy profile published alongside the CBL mechanism: collect the
/// adjusted plan when sharing holds, otherwise the cheapest agents for each
/// distribution collect their solo counts (all ties collect) and everyone
/// else abstains; submit truthfully; accept the allocation.
pub fn recommended_strategies(inst: &Instance, n_bar: &WorkPlan) -> StrategyProfile {
    let (m, d) = (inst.agents(), inst.dists());
    let counts: Vec<Vec<f64>> = if check_favorable(inst, n_bar).favorable {
        compute_bargaining_approx(inst, n_bar).n_tilde.counts().to_vec()
    } else {
        let mut counts = vec![vec![0.0; d]; m];
        for (i, row) in counts.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                if inst.cheapest_agents(k).contains(&i) {
                    *cell = inst.n_ir(i, k).expect("cheapest agent has finite cost");
                }
            }
        }
        counts
    };
    StrategyProfile {
        agents: counts
            .into_iter()
            .map(|c| AgentStrategy {
                counts: c,
                submit: SubmissionRule::Truthful,
                estimate: EstimatorRule::Accept,
            })
            .collect(),
    }
}
