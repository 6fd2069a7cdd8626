//! Python bindings for the collaborative-estimation mechanism toolkit.
//! Matrices cross the boundary as nested lists of floats; `float("inf")`
//! marks distributions an agent cannot sample.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cbl_core::agents::{AgentStrategy, EstimatorRule, StrategyProfile, SubmissionRule};
use cbl_core::sim::{Mechanism, SimConfig};
use cbl_core::{corruption, Provenance, WorkPlan};

fn err(e: cbl_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A problem instance: shared noise scale and the per-agent, per-
/// distribution sampling costs.
#[pyclass(name = "Instance", from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: cbl_core::Instance,
}

#[pymethods]
impl PyInstance {
    #[new]
    fn new(costs: Vec<Vec<f64>>, sigma: f64) -> PyResult<Self> {
        Ok(PyInstance {
            inner: cbl_core::Instance::new(costs, sigma).map_err(err)?,
        })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.agents()
    }

    #[getter]
    fn dists(&self) -> usize {
        self.inner.dists()
    }

    fn cost(&self, agent: usize, dist: usize) -> PyResult<f64> {
        self.check(agent, dist)?;
        Ok(self.inner.cost(agent, dist))
    }

    /// Solo-optimal count for one cell; None at infinite cost.
    fn n_ir(&self, agent: usize, dist: usize) -> PyResult<Option<f64>> {
        self.check(agent, dist)?;
        Ok(self.inner.n_ir(agent, dist))
    }

    /// Best penalty the agent can achieve alone.
    fn p_ir(&self, agent: usize) -> PyResult<f64> {
        self.check(agent, 0)?;
        Ok(self.inner.p_ir(agent))
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(agents={}, dists={}, sigma={})",
            self.inner.agents(),
            self.inner.dists(),
            self.inner.sigma()
        )
    }
}

impl PyInstance {
    fn check(&self, agent: usize, dist: usize) -> PyResult<()> {
        if agent >= self.inner.agents() || dist >= self.inner.dists() {
            return Err(PyValueError::new_err(format!(
                "index ({agent}, {dist}) outside {}x{}",
                self.inner.agents(),
                self.inner.dists()
            )));
        }
        Ok(())
    }
}

fn to_plan(inst: &PyInstance, counts: Vec<Vec<f64>>) -> PyResult<WorkPlan> {
    WorkPlan::new(counts, &inst.inner).map_err(err)
}

fn breakdown_tuple(b: &cbl_core::PenaltyBreakdown) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    (b.per_cell.clone(), b.per_agent.clone(), b.social)
}

/// Penalties when everyone follows the plan compliantly under the pooled
/// sample mean: returns (per_cell, per_agent, social).
#[pyfunction]
fn compliant_penalty(
    inst: &PyInstance,
    counts: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let plan = to_plan(inst, counts)?;
    Ok(breakdown_tuple(&cbl_core::model::compliant_penalty(
        &inst.inner,
        &plan,
    )))
}

/// Returns (is_solution, per-agent slack).
#[pyfunction]
fn is_bargaining_solution(
    inst: &PyInstance,
    counts: Vec<Vec<f64>>,
) -> PyResult<(bool, Vec<f64>)> {
    let plan = to_plan(inst, counts)?;
    let rep = cbl_core::model::is_bargaining_solution(&inst.inner, &plan);
    Ok((rep.is_solution, rep.slack))
}

/// Social-penalty-minimizing division of work under per-agent individual
/// rationality.
#[pyfunction]
#[pyo3(signature = (inst, tol = 1e-9))]
fn utilitarian_bargain(inst: &PyInstance, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(cbl_core::bargaining::utilitarian_bargain(&inst.inner, tol)
        .map_err(err)?
        .counts()
        .to_vec())
}

/// Exhaustive grid oracle for the same program (small instances only).
#[pyfunction]
fn brute_force_bargain(inst: &PyInstance, grid: f64, cap: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(cbl_core::bargaining::brute_force_bargain(&inst.inner, grid, cap)
        .map_err(err)?
        .counts()
        .to_vec())
}

/// Enforceable-plan adjustment: returns (n_tilde, donating sets, totals).
#[allow(clippy::type_complexity)]
#[pyfunction]
fn compute_bargaining_approx(
    inst: &PyInstance,
    n_bar: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<usize>>, Vec<f64>)> {
    let plan = to_plan(inst, n_bar)?;
    let approx = cbl_core::bargaining::compute_bargaining_approx(&inst.inner, &plan);
    Ok((
        approx.n_tilde.counts().to_vec(),
        approx.donating.clone(),
        approx.totals.clone(),
    ))
}

/// Per-distribution sharing check: (holds, first violating (agent, dist)).
#[pyfunction]
fn check_favorable(
    inst: &PyInstance,
    n_bar: Vec<Vec<f64>>,
) -> PyResult<(bool, Option<(usize, usize)>)> {
    let plan = to_plan(inst, n_bar)?;
    let rep = cbl_core::bargaining::check_favorable(&inst.inner, &plan);
    Ok((rep.favorable, rep.first_violation))
}

fn cell(n_star: f64, t_prime: f64, cost: f64, sigma: f64) -> PyResult<corruption::CellParams> {
    corruption::CellParams::new(n_star, t_prime, cost, sigma).map_err(err)
}

/// The corruption-coefficient equation at `alpha`.
#[pyfunction]
fn g_function(n_star: f64, t_prime: f64, cost: f64, sigma: f64, alpha: f64) -> PyResult<f64> {
    Ok(corruption::g_function(&cell(n_star, t_prime, cost, sigma)?, alpha))
}

/// Smallest root of the coefficient equation: returns (alpha, residual).
#[pyfunction]
#[pyo3(signature = (n_star, t_prime, cost, sigma, tol = corruption::ALPHA_TOL))]
fn solve_alpha(
    n_star: f64,
    t_prime: f64,
    cost: f64,
    sigma: f64,
    tol: f64,
) -> PyResult<(f64, f64)> {
    let alpha =
        corruption::solve_alpha(&cell(n_star, t_prime, cost, sigma)?, tol).map_err(err)?;
    Ok((alpha.value, alpha.residual))
}

/// Closed-form corruption-branch penalty at the solved coefficient.
#[pyfunction]
fn penalty_closed_form(
    n_star: f64,
    t_prime: f64,
    cost: f64,
    sigma: f64,
    alpha: f64,
) -> PyResult<f64> {
    Ok(corruption::penalty_closed_form(
        &cell(n_star, t_prime, cost, sigma)?,
        &corruption::Alpha {
            value: alpha,
            residual: 0.0,
        },
    ))
}

/// Rational-in-alpha form of the same penalty, valid at roots.
#[pyfunction]
fn penalty_closed_form_alt(
    n_star: f64,
    t_prime: f64,
    cost: f64,
    sigma: f64,
    alpha: f64,
) -> PyResult<f64> {
    Ok(corruption::penalty_closed_form_alt(
        &cell(n_star, t_prime, cost, sigma)?,
        &corruption::Alpha {
            value: alpha,
            residual: 0.0,
        },
    ))
}

/// Gauss-Hermite evaluation of the penalty as a function of own count `n`.
#[pyfunction]
#[pyo3(signature = (n_star, t_prime, cost, sigma, alpha, n, nodes = 200))]
fn penalty_quadrature(
    n_star: f64,
    t_prime: f64,
    cost: f64,
    sigma: f64,
    alpha: f64,
    n: f64,
    nodes: usize,
) -> PyResult<f64> {
    Ok(corruption::penalty_quadrature(
        &cell(n_star, t_prime, cost, sigma)?,
        alpha,
        n,
        nodes,
    ))
}

#[pyfunction]
fn erfcx(x: f64) -> f64 {
    corruption::erfcx(x)
}

#[pyfunction]
fn erfc_lb(x: f64) -> f64 {
    corruption::erfc_lb(x)
}

#[pyfunction]
fn i_integral(l: f64, t: f64) -> f64 {
    corruption::i_integral(l, t)
}

#[pyfunction]
fn j_integral(l: f64, t: f64) -> f64 {
    corruption::j_integral(l, t)
}

/// Recommended collection counts for the plan (truthful submission and
/// acceptance are implied).
#[pyfunction]
fn recommended_counts(inst: &PyInstance, n_bar: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let plan = to_plan(inst, n_bar)?;
    let profile = cbl_core::mechanisms::recommended_strategies(&inst.inner, &plan);
    Ok(profile.agents.into_iter().map(|a| a.counts).collect())
}

/// Exact expected penalties at the recommended strategies under CBL:
/// (per_cell, per_agent, social).
#[pyfunction]
fn analytic_penalty_cbl(
    inst: &PyInstance,
    n_bar: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let plan = to_plan(inst, n_bar)?;
    Ok(breakdown_tuple(
        &cbl_core::sim::analytic_penalty_cbl(&inst.inner, &plan).map_err(err)?,
    ))
}

/// Penalty ratios against the compliant benchmark:
/// (per_cell_ratio, max_ratio, social_ratio, bound, favorable, within_bound).
#[allow(clippy::type_complexity)]
#[pyfunction]
fn efficiency_report(
    inst: &PyInstance,
    n_bar: Vec<Vec<f64>>,
) -> PyResult<(Vec<Vec<f64>>, f64, f64, f64, bool, bool)> {
    let plan = to_plan(inst, n_bar)?;
    let rep = cbl_core::sim::efficiency_report(&inst.inner, &plan).map_err(err)?;
    Ok((
        rep.per_cell_ratio,
        rep.max_ratio,
        rep.social_ratio,
        rep.bound,
        rep.favorable,
        rep.within_bound,
    ))
}

/// Worst-case family: returns (costs, plan, optimum, ne_lower_bound,
/// ratio_bound).
#[allow(clippy::type_complexity)]
#[pyfunction]
fn hardness_instance(
    m: usize,
    gamma: f64,
    sigma: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64, f64, f64)> {
    let hard = cbl_core::sim::hardness_instance(m, gamma, sigma).map_err(err)?;
    Ok((
        hard.instance.costs().to_vec(),
        hard.plan.counts().to_vec(),
        hard.optimum,
        hard.ne_social_lower_bound,
        hard.ratio_lower_bound,
    ))
}

/// Monte Carlo penalties for a compliant profile collecting `counts`:
/// (per_cell, per_agent, social, std_error). `mechanism` is "cbl" or
/// "sample_mean".
#[allow(clippy::type_complexity)]
#[pyfunction]
#[pyo3(signature = (inst, n_bar, counts, mechanism, replications, master_seed))]
fn run_game_compliant(
    inst: &PyInstance,
    n_bar: Vec<Vec<f64>>,
    counts: Vec<Vec<f64>>,
    mechanism: &str,
    replications: u64,
    master_seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64, Vec<Vec<f64>>)> {
    let plan = to_plan(inst, n_bar)?;
    let mech = match mechanism {
        "cbl" => Mechanism::Cbl,
        "sample_mean" => Mechanism::SampleMean,
        other => return Err(PyValueError::new_err(format!("unknown mechanism {other}"))),
    };
    let profile = StrategyProfile {
        agents: counts
            .into_iter()
            .map(|c| AgentStrategy {
                counts: c,
                submit: SubmissionRule::Truthful,
                estimate: EstimatorRule::Accept,
            })
            .collect(),
    };
    let cfg = SimConfig {
        replications,
        master_seed,
        mu: vec![0.0; inst.inner.dists()],
        nodes: 200,
    };
    let out = cbl_core::sim::run_game(&inst.inner, &plan, &profile, mech, &cfg).map_err(err)?;
    let se = match &out.provenance {
        Provenance::MonteCarlo { std_error, .. } => std_error.clone(),
        Provenance::Analytic => unreachable!(),
    };
    Ok((out.per_cell.clone(), out.per_agent.clone(), out.social, se))
}

#[pymodule]
fn cbl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(compliant_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(is_bargaining_solution, m)?)?;
    m.add_function(wrap_pyfunction!(utilitarian_bargain, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_bargain, m)?)?;
    m.add_function(wrap_pyfunction!(compute_bargaining_approx, m)?)?;
    m.add_function(wrap_pyfunction!(check_favorable, m)?)?;
    m.add_function(wrap_pyfunction!(g_function, m)?)?;
    m.add_function(wrap_pyfunction!(solve_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_closed_form_alt, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(erfcx, m)?)?;
    m.add_function(wrap_pyfunction!(erfc_lb, m)?)?;
    m.add_function(wrap_pyfunction!(i_integral, m)?)?;
    m.add_function(wrap_pyfunction!(j_integral, m)?)?;
    m.add_function(wrap_pyfunction!(recommended_counts, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_penalty_cbl, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency_report, m)?)?;
    m.add_function(wrap_pyfunction!(hardness_instance, m)?)?;
    m.add_function(wrap_pyfunction!(run_game_compliant, m)?)?;
    Ok(())
}
