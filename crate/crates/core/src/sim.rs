//! Monte Carlo game execution, analytic penalty tables, incentive sweeps,
//! efficiency reports, and the worst-case instance generator.
//!
//! Every mechanism and strategy family here is translation-equivariant, so
//! the worst-case-over-means risk is mean-independent; simulations fix the
//! mean vector (zero by default) and estimate it directly.

use crate::agents::{apply_submission, collect_data, EstimatorRule, StrategyProfile};
use crate::bargaining::{check_favorable, compute_bargaining_approx};
use crate::corruption::{
    penalty_closed_form, penalty_quadrature, solve_alpha, CellParams, ALPHA_TOL,
};
use crate::error::{Error, Result};
use crate::mechanisms::{cbl_allocate, sample_mean_allocate, Branch, Submissions};
use crate::model::{
    compliant_penalty, cost_term, error_term, Instance, PenaltyBreakdown, Provenance, WorkPlan,
};
use crate::rng::{mix, stream, TAG_COLLECT, TAG_REPLICATION, TAG_SUBMIT};

/// Monte Carlo settings. `mu` defaults to all-zero at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub replications: u64,
    pub master_seed: u64,
    pub mu: Vec<f64>,
    pub nodes: usize,
}

/// Which mechanism a game runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Cbl,
    SampleMean,
}

/// Branch label for a cell, recomputed from the plan alone (no data).
/// Under the sample-mean mechanism every cell is `PooledMean`.
pub fn classify_cells(inst: &Instance, n_bar: &WorkPlan) -> Vec<Vec<Branch>> {
    let approx = compute_bargaining_approx(inst, n_bar);
    let favorable = check_favorable(inst, n_bar).favorable;
    (0..inst.agents())
        .map(|i| {
            (0..inst.dists())
                .map(|k| {
                    if favorable {
                        if approx.is_donating(i, k) {
                            Branch::OwnMean
                        } else if approx.n_tilde.get(i, k) == 0.0 {
                            Branch::OthersMean
                        } else {
                            Branch::Corrupted {
                                alpha: f64::NAN,
                                eta_sq: f64::NAN,
                                clean_count: 0,
                                corrupt_count: 0,
                            }
                        }
                    } else if inst.cheapest_agents(k).contains(&i) {
                        Branch::OwnMean
                    } else {
                        Branch::OthersMean
                    }
                })
                .collect()
        })
        .collect()
}

fn rounded_counts(profile: &StrategyProfile) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(profile.agents.len());
    for (i, a) in profile.agents.iter().enumerate() {
        let mut row = Vec::with_capacity(a.counts.len());
        for (k, &n) in a.counts.iter().enumerate() {
            if (n - n.round_ties_even()).abs() > 1e-9 {
                return Err(Error::NonIntegerCount {
                    agent: i + 1,
                    dist: k + 1,
                    count: n,
                });
            }
            row.push(n.round_ties_even() as usize);
        }
        out.push(row);
    }
    Ok(out)
}

/// Runs `cfg.replications` independent games and estimates each agent's
/// penalty per distribution: average squared estimation error plus
/// collection cost. Per-replication randomness is derived from
/// `(master_seed, replication)`; aggregation is in replication order, so
/// the result is bit-reproducible.
pub fn run_game(
    inst: &Instance,
    n_bar: &WorkPlan,
    profile: &StrategyProfile,
    mechanism: Mechanism,
    cfg: &SimConfig,
) -> Result<PenaltyBreakdown> {
    if cfg.replications == 0 {
        return Err(Error::InvalidParameter(
            "replications must be at least 1".into(),
        ));
    }
    if cfg.mu.len() != inst.dists() {
        return Err(Error::InvalidParameter(format!(
            "mu must have length {}",
            inst.dists()
        )));
    }
    profile.validate(inst)?;
    let counts = rounded_counts(profile)?;
    let (m, d) = (inst.agents(), inst.dists());

    // Sums and sums of squares of the per-replication squared errors.
    let mut sum = vec![vec![0.0f64; d]; m];
    let mut sumsq = vec![vec![0.0f64; d]; m];
    let mut inf_hits = vec![vec![false; d]; m];

    for r in 0..cfg.replications {
        let rep_seed = mix(cfg.master_seed, &[TAG_REPLICATION, r]);
        let collected: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|i| {
                let mut rng = stream(rep_seed, &[TAG_COLLECT, i as u64]);
                collect_data(inst, &counts[i], &cfg.mu, &mut rng)
            })
            .collect();
        let submitted: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|i| {
                let mut rng = stream(rep_seed, &[TAG_SUBMIT, i as u64]);
                apply_submission(&profile.agents[i].submit, &collected[i], inst.sigma(), &mut rng)
            })
            .collect();
        let subs = Submissions::new(submitted.clone())?;
        let allocation = match mechanism {
            Mechanism::SampleMean => sample_mean_allocate(&subs),
            Mechanism::Cbl => cbl_allocate(inst, n_bar, &subs, rep_seed)?,
        };

        for i in 0..m {
            for k in 0..d {
                let estimate = match &profile.agents[i].estimate {
                    EstimatorRule::Accept => {
                        let cell = &allocation.cells[i][k];
                        if cell.defined {
                            Some(cell.value)
                        } else {
                            None
                        }
                    }
                    EstimatorRule::OwnSampleMean => {
                        let own = &collected[i][k];
                        if own.is_empty() {
                            None
                        } else {
                            Some(own.iter().sum::<f64>() / own.len() as f64)
                        }
                    }
                    EstimatorRule::FreeRiderDiscount { total_counts } => {
                        let cell = &allocation.cells[i][k];
                        if !cell.defined {
                            None
                        } else {
                            let own = &submitted[i][k];
                            Some(crate::agents::free_rider_estimate(
                                total_counts[k],
                                cell.value,
                                own.iter().sum(),
                                own.len() as f64,
                            )?)
                        }
                    }
                };
                match estimate {
                    Some(est) => {
                        let err = est - cfg.mu[k];
                        sum[i][k] += err * err;
                        sumsq[i][k] += err * err * err * err;
                    }
                    None => inf_hits[i][k] = true,
                }
            }
        }
    }

    let reps = cfg.replications as f64;
    let mut per_cell = vec![vec![0.0f64; d]; m];
    let mut std_error = vec![vec![0.0f64; d]; m];
    for i in 0..m {
        for k in 0..d {
            if inf_hits[i][k] {
                // An undefined estimate has unbounded worst-case error.
                per_cell[i][k] = f64::INFINITY;
                std_error[i][k] = f64::INFINITY;
                continue;
            }
            let mean_err = sum[i][k] / reps;
            per_cell[i][k] = mean_err + cost_term(inst.cost(i, k), counts[i][k] as f64);
            std_error[i][k] = if cfg.replications > 1 {
                let var = ((sumsq[i][k] - sum[i][k] * sum[i][k] / reps) / (reps - 1.0)).max(0.0);
                (var / reps).sqrt()
            } else {
                f64::INFINITY
            };
        }
    }
    Ok(PenaltyBreakdown::from_cells(
        per_cell,
        Provenance::MonteCarlo {
            replications: cfg.replications,
            std_error,
        },
    ))
}

/// Exact expected penalties under the CBL mechanism when everyone follows
/// the recommended strategies:
///
/// - working alone (or cheapest when sharing fails): `2 sigma sqrt(c)`;
/// - zero adjusted count under sharing: `sigma^2 / (others' total)`;
/// - corruption branch: the closed-form cell penalty at the solved
///   coefficient;
/// - non-cheapest when sharing fails: `sigma^2 / (cheapest agents' total)`.
pub fn analytic_penalty_cbl(inst: &Instance, n_bar: &WorkPlan) -> Result<PenaltyBreakdown> {
    let approx = compute_bargaining_approx(inst, n_bar);
    let favorable = check_favorable(inst, n_bar).favorable;
    let sigma = inst.sigma();
    let (m, d) = (inst.agents(), inst.dists());
    let mut per_cell = vec![vec![0.0f64; d]; m];
    for (i, row) in per_cell.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = if favorable {
                if approx.is_donating(i, k) {
                    2.0 * sigma * inst.cost(i, k).sqrt()
                } else if approx.n_tilde.get(i, k) == 0.0 {
                    error_term(sigma, approx.totals[k] - approx.n_tilde.get(i, k))
                } else {
                    let params = CellParams::new(
                        approx.n_tilde.get(i, k),
                        approx.totals[k],
                        inst.cost(i, k),
                        sigma,
                    )?;
                    let alpha = solve_alpha(&params, ALPHA_TOL)?;
                    penalty_closed_form(&params, &alpha)
                }
            } else {
                let cheapest = inst.cheapest_agents(k);
                if cheapest.contains(&i) {
                    2.0 * sigma * inst.cost(i, k).sqrt()
                } else {
                    let total: f64 = cheapest
                        .iter()
                        .map(|&j| inst.n_ir(j, k).expect("cheapest cost is finite"))
                        .sum();
                    error_term(sigma, total)
                }
            };
        }
    }
    Ok(PenaltyBreakdown::from_cells(per_cell, Provenance::Analytic))
}

/// A deviation sweep over one agent's own count for one distribution, with
/// everyone else held at the recommended strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct NicSweep {
    /// `(count, penalty)` along the grid.
    pub curve: Vec<(f64, f64)>,
    pub argmin: (f64, f64),
    /// Central finite-difference derivative at the recommended count.
    pub derivative_at_plan: f64,
    /// The recommended count for the cell.
    pub n_star: f64,
}

/// Evaluates the corruption-branch penalty of `(agent, dist)` across a grid
/// of own counts. Errors unless the cell is in the corruption domain
/// (sharing holds, the agent is not working alone, positive adjusted
/// count).
#[allow(clippy::too_many_arguments)]
pub fn nic_sweep(
    inst: &Instance,
    n_bar: &WorkPlan,
    agent: usize,
    dist: usize,
    lo: f64,
    hi: f64,
    steps: usize,
    nodes: usize,
) -> Result<NicSweep> {
    if agent >= inst.agents() || dist >= inst.dists() {
        return Err(Error::IndexOutOfBounds(format!(
            "agent {} / distribution {} outside {}x{}",
            agent + 1,
            dist + 1,
            inst.agents(),
            inst.dists()
        )));
    }
    if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi <= lo || steps < 2 {
        return Err(Error::InvalidParameter(
            "sweep needs 0 < lo < hi and at least 2 steps".into(),
        ));
    }
    if !check_favorable(inst, n_bar).favorable {
        return Err(Error::CellNotInCorruptionDomain(
            "per-distribution sharing does not hold for the plan".into(),
        ));
    }
    let approx = compute_bargaining_approx(inst, n_bar);
    if approx.is_donating(agent, dist) || approx.n_tilde.get(agent, dist) == 0.0 {
        return Err(Error::CellNotInCorruptionDomain(format!(
            "agent {} does not enter the corruption branch for distribution {}",
            agent + 1,
            dist + 1
        )));
    }
    let params = CellParams::new(
        approx.n_tilde.get(agent, dist),
        approx.totals[dist],
        inst.cost(agent, dist),
        inst.sigma(),
    )?;
    let alpha = solve_alpha(&params, ALPHA_TOL)?;

    let mut curve = Vec::with_capacity(steps);
    let mut argmin = (f64::NAN, f64::INFINITY);
    for j in 0..steps {
        let n = lo + (hi - lo) * j as f64 / (steps - 1) as f64;
        let p = penalty_quadrature(&params, alpha.value, n, nodes);
        if p < argmin.1 {
            argmin = (n, p);
        }
        curve.push((n, p));
    }
    let h = 1e-5 * params.n_star;
    let derivative_at_plan = (penalty_quadrature(&params, alpha.value, params.n_star + h, nodes)
        - penalty_quadrature(&params, alpha.value, params.n_star - h, nodes))
        / (2.0 * h);
    Ok(NicSweep {
        curve,
        argmin,
        derivative_at_plan,
        n_star: params.n_star,
    })
}

/// Penalty ratios of the CBL equilibrium against the compliant sample-mean
/// benchmark at the same plan. The bound is 8 when per-distribution
/// sharing holds (per cell), `sqrt(m)` otherwise (socially).
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub per_cell_ratio: Vec<Vec<f64>>,
    pub per_agent_ratio: Vec<f64>,
    pub max_ratio: f64,
    pub social_ratio: f64,
    pub bound: f64,
    pub favorable: bool,
    pub within_bound: bool,
}

pub fn efficiency_report(inst: &Instance, n_bar: &WorkPlan) -> Result<EfficiencyReport> {
    let mech = analytic_penalty_cbl(inst, n_bar)?;
    let bench = compliant_penalty(inst, n_bar);
    let favorable = check_favorable(inst, n_bar).favorable;
    let ratio = |num: f64, den: f64| {
        if den.is_infinite() {
            0.0
        } else {
            num / den
        }
    };
    let (m, d) = (inst.agents(), inst.dists());
    let per_cell_ratio: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..d)
                .map(|k| ratio(mech.per_cell[i][k], bench.per_cell[i][k]))
                .collect()
        })
        .collect();
    let per_agent_ratio: Vec<f64> = (0..m)
        .map(|i| ratio(mech.per_agent[i], bench.per_agent[i]))
        .collect();
    let max_ratio = per_cell_ratio
        .iter()
        .flatten()
        .fold(0.0f64, |a, &r| a.max(r));
    let social_ratio = ratio(mech.social, bench.social);
    let bound = if favorable {
        8.0
    } else {
        (inst.agents() as f64).sqrt()
    };
    let within_bound = if favorable {
        max_ratio <= bound
    } else {
        social_ratio <= bound
    };
    Ok(EfficiencyReport {
        per_cell_ratio,
        per_agent_ratio,
        max_ratio,
        social_ratio,
        bound,
        favorable,
        within_bound,
    })
}

/// The two-distribution worst-case family: one agent alone can sample the
/// first distribution, everyone else only the second, all at unit-scale
/// cost `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardnessInstance {
    pub instance: Instance,
    /// The social-penalty-minimizing division of work (the second column's
    /// total is split equally among agents 2..m).
    pub plan: WorkPlan,
    /// Minimum social penalty over all divisions: `4 sigma sqrt(m gamma)`.
    pub optimum: f64,
    /// Social penalty at any equilibrium of any mechanism is at least
    /// `m sigma sqrt(gamma)`.
    pub ne_social_lower_bound: f64,
    /// Ratio of the two: every mechanism is at least `sqrt(m)/4`
    /// inefficient here.
    pub ratio_lower_bound: f64,
}

pub fn hardness_instance(m: usize, gamma: f64, sigma: f64) -> Result<HardnessInstance> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "hardness construction needs at least 2 agents, got {m}"
        )));
    }
    if !gamma.is_finite() || gamma <= 0.0 || !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(
            "gamma and sigma must be positive finite reals".into(),
        ));
    }
    let mut costs = vec![vec![f64::INFINITY, gamma]; m];
    costs[0] = vec![gamma, f64::INFINITY];
    let instance = Instance::new(costs, sigma)?;
    let total = sigma * (m as f64 / gamma).sqrt();
    let mut counts = vec![vec![0.0, total / (m as f64 - 1.0)]; m];
    counts[0] = vec![total, 0.0];
    let plan = WorkPlan::new(counts, &instance)?;
    Ok(HardnessInstance {
        instance,
        plan,
        optimum: 4.0 * sigma * (m as f64 * gamma).sqrt(),
        ne_social_lower_bound: m as f64 * sigma * gamma.sqrt(),
        ratio_lower_bound: (m as f64).sqrt() / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentStrategy, SubmissionRule};

    fn symmetric(m: usize, d: usize, cost: f64, sigma: f64) -> Instance {
        Instance::new(vec![vec![cost; d]; m], sigma).unwrap()
    }

    fn sim(reps: u64, seed: u64, d: usize) -> SimConfig {
        SimConfig {
            replications: reps,
            master_seed: seed,
            mu: vec![0.0; d],
            nodes: 200,
        }
    }

    #[test]
    fn zero_replications_rejected() {
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![1.0], vec![1.0]], &inst).unwrap();
        let profile = StrategyProfile::compliant(vec![vec![1.0], vec![1.0]]);
        let err = run_game(&inst, &plan, &profile, Mechanism::SampleMean, &sim(0, 1, 1));
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn non_integer_counts_rejected() {
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![1.0], vec![1.0]], &inst).unwrap();
        let profile = StrategyProfile::compliant(vec![vec![0.5], vec![1.0]]);
        let err = run_game(&inst, &plan, &profile, Mechanism::SampleMean, &sim(10, 1, 1));
        assert!(matches!(err, Err(Error::NonIntegerCount { agent: 1, .. })));
    }

    #[test]
    fn monte_carlo_matches_compliant_penalty() {
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![1.0], vec![1.0]], &inst).unwrap();
        let profile = StrategyProfile::compliant(vec![vec![1.0], vec![1.0]]);
        let out = run_game(
            &inst,
            &plan,
            &profile,
            Mechanism::SampleMean,
            &sim(100_000, 7, 1),
        )
        .unwrap();
        let se = match &out.provenance {
            Provenance::MonteCarlo { std_error, .. } => std_error[0][0],
            _ => unreachable!(),
        };
        assert!(
            (out.per_cell[0][0] - 1.5).abs() <= 3.0 * se,
            "mc = {}, se = {se}",
            out.per_cell[0][0]
        );
    }

    #[test]
    fn run_game_deterministic() {
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![1.0], vec![1.0]], &inst).unwrap();
        let profile = StrategyProfile::compliant(vec![vec![1.0], vec![1.0]]);
        let a = run_game(&inst, &plan, &profile, Mechanism::Cbl, &sim(500, 3, 1)).unwrap();
        let b = run_game(&inst, &plan, &profile, Mechanism::Cbl, &sim(500, 3, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_penalties_by_branch() {
        // All working alone: 2 sigma sqrt(c) per cell.
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![0.6], vec![0.6]], &inst).unwrap();
        let out = analytic_penalty_cbl(&inst, &plan).unwrap();
        assert!((out.per_cell[0][0] - 2.0).abs() < 1e-12);

        // Corruption branch on the canonical 25-agent instance.
        let inst = symmetric(25, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![0.2]; 25], &inst).unwrap();
        let out = analytic_penalty_cbl(&inst, &plan).unwrap();
        let params = CellParams::new(0.2, 5.0, 1.0, 1.0).unwrap();
        let alpha = solve_alpha(&params, ALPHA_TOL).unwrap();
        let want = penalty_closed_form(&params, &alpha);
        assert!((out.per_cell[7][0] - want).abs() < 1e-12);

        // Hard instance, sharing fails: agent 2's first-coordinate penalty
        // is sigma^2 / (agent 1's solo count) = sigma sqrt(gamma).
        let hard = hardness_instance(16, 1.0, 1.0).unwrap();
        let out = analytic_penalty_cbl(&hard.instance, &hard.plan).unwrap();
        assert!((out.per_cell[1][0] - 1.0).abs() < 1e-12);
        assert!((out.per_cell[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn branch_classification_matches_allocation_diagnostics() {
        let inst = symmetric(25, 1, 1.0 / 25.0, 1.0);
        let n_bar = WorkPlan::new(vec![vec![1.0]; 25], &inst).unwrap();
        let classes = classify_cells(&inst, &n_bar);
        let profile = StrategyProfile::compliant(vec![vec![1.0]; 25]);
        let counts = rounded_counts(&profile).unwrap();
        let collected: Vec<Vec<Vec<f64>>> = (0..25)
            .map(|i| {
                let mut rng = stream(5, &[TAG_COLLECT, i as u64]);
                collect_data(&inst, &counts[i], &[0.0], &mut rng)
            })
            .collect();
        let subs = Submissions::new(collected).unwrap();
        let alloc = cbl_allocate(&inst, &n_bar, &subs, 5).unwrap();
        for (row, class_row) in alloc.cells.iter().zip(&classes) {
            assert_eq!(row[0].branch.label(), class_row[0].label());
        }
    }

    #[test]
    fn nic_sweep_canonical() {
        let inst = symmetric(25, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![0.2]; 25], &inst).unwrap();
        let sweep = nic_sweep(&inst, &plan, 0, 0, 0.02, 0.6, 291, 400).unwrap();
        assert!((sweep.argmin.0 - 0.2).abs() <= 0.01 * 0.2 + 1e-12);
        assert!(sweep.derivative_at_plan.abs() <= 1e-4);
        let vals: Vec<f64> = sweep.curve.iter().map(|&(_, p)| p).collect();
        for w in vals.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-8);
        }
    }

    #[test]
    fn nic_sweep_rejects_cells_outside_corruption_branch() {
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![0.6], vec![0.6]], &inst).unwrap();
        let err = nic_sweep(&inst, &plan, 0, 0, 0.1, 2.0, 20, 64).unwrap_err();
        assert!(matches!(err, Error::CellNotInCorruptionDomain(_)));
    }

    #[test]
    fn efficiency_canonical_25_within_8() {
        let inst = symmetric(25, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![0.2]; 25], &inst).unwrap();
        let rep = efficiency_report(&inst, &plan).unwrap();
        assert!(rep.favorable);
        assert_eq!(rep.bound, 8.0);
        assert!(rep.max_ratio <= 8.0, "max ratio {}", rep.max_ratio);
        assert!(rep.within_bound);
        assert!(rep.social_ratio <= rep.per_agent_ratio.iter().copied().fold(0.0, f64::max) + 1e-12);
    }

    #[test]
    fn efficiency_hard_instance_within_sqrt_m() {
        let hard = hardness_instance(16, 1.0, 1.0).unwrap();
        let rep = efficiency_report(&hard.instance, &hard.plan).unwrap();
        assert!(!rep.favorable);
        assert_eq!(rep.bound, 4.0);
        assert!(rep.social_ratio <= 4.0, "social ratio {}", rep.social_ratio);
        assert!(rep.within_bound);
    }

    #[test]
    fn hardness_numbers() {
        let h = hardness_instance(16, 1.0, 1.0).unwrap();
        assert_eq!(h.optimum, 16.0);
        assert_eq!(h.ne_social_lower_bound, 16.0);
        assert_eq!(h.ratio_lower_bound, 1.0);
        let h = hardness_instance(100, 1.0, 1.0).unwrap();
        assert_eq!(h.ratio_lower_bound, 2.5);
        // sqrt(gamma) homogeneity
        let a = hardness_instance(9, 4.0, 1.0).unwrap();
        let b = hardness_instance(9, 1.0, 1.0).unwrap();
        assert!((a.optimum - 2.0 * b.optimum).abs() < 1e-12);
        assert!(hardness_instance(1, 1.0, 1.0).is_err());
    }

    #[test]
    fn fabrication_is_futile_under_cbl() {
        // 25 symmetric agents at cost 1/25 planning one sample each (the
        // canonical corruption-branch design scaled to integer counts).
        // Swapping the truthful submission for fabricated data at an offset
        // mean does not beat the recommended strategy: the coefficient
        // inflates the corruption noise with the observed gap.
        let inst = symmetric(25, 1, 1.0 / 25.0, 1.0);
        let plan = WorkPlan::new(vec![vec![1.0]; 25], &inst).unwrap();
        let truthful = StrategyProfile::compliant(vec![vec![1.0]; 25]);
        let cfg = sim(5_000, 31, 1);
        let base = run_game(&inst, &plan, &truthful, Mechanism::Cbl, &cfg).unwrap();
        let base_se = match &base.provenance {
            Provenance::MonteCarlo { std_error, .. } => std_error[0][0],
            _ => unreachable!(),
        };
        for offset in [0.5, 1.0, 2.0] {
            let mut agents = truthful.agents.clone();
            agents[0] = AgentStrategy {
                counts: vec![1.0],
                submit: SubmissionRule::Fabricate {
                    mu_tilde: offset,
                    count: 1,
                },
                estimate: EstimatorRule::Accept,
            };
            let deviant = StrategyProfile { agents };
            let out = run_game(&inst, &plan, &deviant, Mechanism::Cbl, &cfg).unwrap();
            let se = match &out.provenance {
                Provenance::MonteCarlo { std_error, .. } => std_error[0][0],
                _ => unreachable!(),
            };
            assert!(
                out.per_agent[0] >= base.per_agent[0] - 3.0 * (se + base_se),
                "offset {offset}: deviation penalty {} undercuts truthful {}",
                out.per_agent[0],
                base.per_agent[0]
            );
        }
    }

    #[test]
    fn free_rider_beats_compliance_under_sample_mean() {
        let inst = symmetric(2, 1, 1.0, 1.0);
        let plan = WorkPlan::new(vec![vec![1.0], vec![1.0]], &inst).unwrap();
        let compliant = StrategyProfile::compliant(vec![vec![1.0], vec![1.0]]);
        let free_rider = StrategyProfile {
            agents: vec![
                AgentStrategy {
                    counts: vec![0.0],
                    submit: SubmissionRule::Fabricate {
                        mu_tilde: 1.729,
                        count: 1,
                    },
                    estimate: EstimatorRule::FreeRiderDiscount {
                        total_counts: vec![2.0],
                    },
                },
                compliant.agents[1].clone(),
            ],
        };
        let cfg = sim(20_000, 99, 1);
        let base = run_game(&inst, &plan, &compliant, Mechanism::SampleMean, &cfg).unwrap();
        let rider = run_game(&inst, &plan, &free_rider, Mechanism::SampleMean, &cfg).unwrap();
        let se = |out: &PenaltyBreakdown| match &out.provenance {
            Provenance::MonteCarlo { std_error, .. } => std_error[0][0],
            _ => unreachable!(),
        };
        let gap = base.per_agent[0] - rider.per_agent[0];
        let combined = (se(&base).powi(2) + se(&rider).powi(2)).sqrt();
        assert!(gap > 3.0 * combined, "gap {gap} vs 3 se {combined}");
    }
}
