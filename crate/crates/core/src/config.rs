//! Experiment config ingestion. One JSON object carries the instance, the
//! work-division choice, the strategy profile, and the Monte Carlo
//! settings; consumers pick the sections they need.
//!
//! ```json
//! {
//!   "sigma": 1.0,
//!   "costs": [[1.0, "inf"], ["inf", 1.0]],
//!   "bargain": {"type": "utilitarian"},
//!   "profile": [
//!     {"counts": [1, 0], "submit": {"kind": "truthful"},
//!      "estimate": {"kind": "accept"}}
//!   ],
//!   "sim": {"replications": 1000, "master_seed": 7, "mu": [0, 0], "nodes": 200}
//! }
//! ```
//!
//! The string `"inf"` marks a distribution an agent cannot sample.

use serde::Deserialize;

use crate::agents::{AgentStrategy, EstimatorRule, StrategyProfile, SubmissionRule};
use crate::bargaining::BargainSpec;
use crate::error::{Error, Result};
use crate::model::{Instance, PlanApprox};
use crate::sim::SimConfig;

#[derive(Debug, Deserialize)]
struct RawConfig {
    sigma: f64,
    costs: Vec<Vec<serde_json::Value>>,
    #[serde(default)]
    bargain: Option<RawBargain>,
    #[serde(default)]
    profile: Option<Vec<RawAgent>>,
    #[serde(default)]
    sim: Option<RawSim>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawBargain {
    Utilitarian,
    Explicit { n: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
struct RawAgent {
    counts: Vec<f64>,
    submit: RawSubmit,
    estimate: RawEstimate,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawSubmit {
    Truthful,
    Fabricate { mu_tilde: f64, count: usize },
    Scale { factor: f64 },
    Withhold { fraction: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawEstimate {
    Accept,
    OwnSampleMean,
    FreeRiderDiscount { total_counts: Vec<f64> },
}

#[derive(Debug, Deserialize)]
struct RawSim {
    replications: u64,
    master_seed: u64,
    #[serde(default)]
    mu: Option<Vec<f64>>,
    #[serde(default)]
    nodes: Option<usize>,
}

/// A parsed experiment configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub instance: Instance,
    pub bargain: Option<BargainSpec>,
    pub profile: Option<StrategyProfile>,
    pub sim: Option<SimConfig>,
}

/// Default Gauss-Hermite node count for quadrature-backed operations.
pub const DEFAULT_NODES: usize = 200;

fn cost_cell(value: &serde_json::Value, agent: usize, dist: usize) -> Result<f64> {
    let bad = || {
        Error::Config(format!(
            "invalid cost at agent {}, distribution {}: expected a positive number or \"inf\", got {value}",
            agent + 1,
            dist + 1
        ))
    };
    match value {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(bad),
        serde_json::Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        _ => Err(bad()),
    }
}

/// Parses a config document. Parse failures carry serde's line/column
/// diagnostics; cost-matrix failures name the offending cell.
pub fn parse_config(text: &str) -> Result<Config> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut costs = Vec::with_capacity(raw.costs.len());
    for (i, row) in raw.costs.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (k, v) in row.iter().enumerate() {
            out.push(cost_cell(v, i, k)?);
        }
        costs.push(out);
    }
    let instance = Instance::new(costs, raw.sigma)?;

    let bargain = raw.bargain.map(|b| match b {
        RawBargain::Utilitarian => BargainSpec::Utilitarian,
        RawBargain::Explicit { n } => BargainSpec::Explicit(n),
    });

    let profile = raw.profile.map(|agents| StrategyProfile {
        agents: agents
            .into_iter()
            .map(|a| AgentStrategy {
                counts: a.counts,
                submit: match a.submit {
                    RawSubmit::Truthful => SubmissionRule::Truthful,
                    RawSubmit::Fabricate { mu_tilde, count } => {
                        SubmissionRule::Fabricate { mu_tilde, count }
                    }
                    RawSubmit::Scale { factor } => SubmissionRule::Scale { factor },
                    RawSubmit::Withhold { fraction } => SubmissionRule::Withhold { fraction },
                },
                estimate: match a.estimate {
                    RawEstimate::Accept => EstimatorRule::Accept,
                    RawEstimate::OwnSampleMean => EstimatorRule::OwnSampleMean,
                    RawEstimate::FreeRiderDiscount { total_counts } => {
                        EstimatorRule::FreeRiderDiscount { total_counts }
                    }
                },
            })
            .collect(),
    });
    if let Some(p) = &profile {
        p.validate(&instance)?;
    }

    let sim = match raw.sim {
        Some(s) => {
            if s.replications == 0 {
                return Err(Error::Config("sim.replications must be at least 1".into()));
            }
            let mu = s.mu.unwrap_or_else(|| vec![0.0; instance.dists()]);
            if mu.len() != instance.dists() {
                return Err(Error::Config(format!(
                    "sim.mu must have length {}",
                    instance.dists()
                )));
            }
            Some(SimConfig {
                replications: s.replications,
                master_seed: s.master_seed,
                mu,
                nodes: s.nodes.unwrap_or(DEFAULT_NODES),
            })
        }
        None => None,
    };

    Ok(Config {
        instance,
        bargain,
        profile,
        sim,
    })
}

/// Work-plan JSON: `{"n": [[...]]}`.
pub fn plan_to_json(plan: &crate::model::WorkPlan) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "n": plan.counts() })).unwrap()
}

/// Adjusted-plan JSON with the working-alone sets (1-based agent indices),
/// frozen totals, and the deterministic scan order used by the adjustment.
pub fn plan_approx_to_json(approx: &PlanApprox) -> String {
    let donating: Vec<Vec<usize>> = approx
        .donating
        .iter()
        .map(|set| set.iter().map(|&i| i + 1).collect())
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "n_tilde": approx.n_tilde.counts(),
        "donating": donating,
        "totals": approx.totals,
        "scan_order": "agents ascending, then distributions ascending, repeated to a fixed point",
    }))
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "sigma": 1.0,
            "costs": [[1.0, "inf"], ["inf", 1.0]],
            "bargain": {"type": "utilitarian"},
            "profile": [
                {"counts": [1, 0], "submit": {"kind": "truthful"}, "estimate": {"kind": "accept"}},
                {"counts": [0, 1], "submit": {"kind": "fabricate", "mu_tilde": 1.729, "count": 5},
                 "estimate": {"kind": "free_rider_discount", "total_counts": [2, 2]}}
            ],
            "sim": {"replications": 100, "master_seed": 7}
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.instance.agents(), 2);
        assert!(cfg.instance.cost(0, 1).is_infinite());
        assert_eq!(cfg.bargain, Some(BargainSpec::Utilitarian));
        let sim = cfg.sim.unwrap();
        assert_eq!(sim.mu, vec![0.0, 0.0]);
        assert_eq!(sim.nodes, DEFAULT_NODES);
        let profile = cfg.profile.unwrap();
        assert!(matches!(
            profile.agents[1].submit,
            SubmissionRule::Fabricate { mu_tilde, count: 5 } if mu_tilde == 1.729
        ));
    }

    #[test]
    fn names_offending_cost_cell() {
        let text = r#"{"sigma": 1.0, "costs": [[1.0, "oops"]]}"#;
        let err = parse_config(text).unwrap_err();
        assert!(
            err.to_string().contains("agent 1, distribution 2"),
            "{err}"
        );
    }

    #[test]
    fn explicit_bargain_roundtrip() {
        let text = r#"{
            "sigma": 1.0,
            "costs": [[1.0], [1.0]],
            "bargain": {"type": "explicit", "n": [[0.6], [0.6]]}
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(
            cfg.bargain,
            Some(BargainSpec::Explicit(vec![vec![0.6], vec![0.6]]))
        );
    }
}
