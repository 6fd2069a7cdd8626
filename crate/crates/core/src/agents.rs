//! Parametric strategy families used to probe the mechanisms: how much to
//! collect, what to submit (truthfully or not), and how to post-process the
//! allocation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::Instance;

/// What an agent submits relative to what she collected.
#[derive(Debug, Clone, PartialEq)]
pub enum SubmissionRule {
    /// Identity: submit the collected data as-is.
    Truthful,
    /// Replace the data with `count` fresh draws from `N(mu_tilde, sigma^2)`.
    Fabricate { mu_tilde: f64, count: usize },
    /// Multiply every point by `factor`.
    Scale { factor: f64 },
    /// Keep only a prefix, dropping `fraction` of the points.
    Withhold { fraction: f64 },
}

/// How an agent turns her information into an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorRule {
    /// Accept the mechanism's allocation.
    Accept,
    /// Sample mean of her own collected data.
    OwnSampleMean,
    /// Un-mix the pooled mean: subtract her own submission and rescale,
    /// recovering the mean of everyone else's points exactly.
    /// `total_counts[k]` is the total pooled count for distribution `k`,
    /// her own submission included.
    FreeRiderDiscount { total_counts: Vec<f64> },
}

/// One agent's strategy: collection counts (reals; rounded at the
/// simulation boundary), a submission rule, and an estimator rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStrategy {
    pub counts: Vec<f64>,
    pub submit: SubmissionRule,
    pub estimate: EstimatorRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    pub agents: Vec<AgentStrategy>,
}

impl StrategyProfile {
    /// Everyone collects per `counts`, submits truthfully, and accepts.
    pub fn compliant(counts: Vec<Vec<f64>>) -> Self {
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

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if self.agents.len() != inst.agents() {
            return Err(Error::InvalidParameter(format!(
                "profile has {} agents, instance has {}",
                self.agents.len(),
                inst.agents()
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.counts.len() != inst.dists() {
                return Err(Error::InvalidParameter(format!(
                    "agent {} has {} counts, instance has {} distributions",
                    i + 1,
                    a.counts.len(),
                    inst.dists()
                )));
            }
            for (k, &n) in a.counts.iter().enumerate() {
                if !n.is_finite() || n < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "agent {} count for distribution {} must be finite and nonnegative",
                        i + 1,
                        k + 1
                    )));
                }
                if n > 0.0 && inst.cost(i, k).is_infinite() {
                    return Err(Error::InvalidParameter(format!(
                        "agent {} cannot collect from distribution {}",
                        i + 1,
                        k + 1
                    )));
                }
            }
            if let SubmissionRule::Withhold { fraction } = a.submit {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::InvalidParameter(format!(
                        "withhold fraction must lie in [0, 1], got {fraction}"
                    )));
                }
            }
            if let EstimatorRule::FreeRiderDiscount { total_counts } = &a.estimate {
                if total_counts.len() != inst.dists() {
                    return Err(Error::InvalidParameter(format!(
                        "agent {} discount totals must have length {}",
                        i + 1,
                        inst.dists()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draws `counts[k]` samples from `N(mu[k], sigma^2)` for each distribution.
pub fn collect_data(
    inst: &Instance,
    counts: &[usize],
    mu: &[f64],
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    assert_eq!(counts.len(), inst.dists());
    assert_eq!(mu.len(), inst.dists());
    counts
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let normal = Normal::new(mu[k], inst.sigma()).expect("sigma > 0");
            (0..n).map(|_| normal.sample(rng)).collect()
        })
        .collect()
}

/// Applies a submission rule to each distribution's collected data.
pub fn apply_submission(
    rule: &SubmissionRule,
    own_data: &[Vec<f64>],
    sigma: f64,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    match rule {
        SubmissionRule::Truthful => own_data.to_vec(),
        SubmissionRule::Fabricate { mu_tilde, count } => {
            let normal = Normal::new(*mu_tilde, sigma).expect("sigma > 0");
            own_data
                .iter()
                .map(|_| (0..*count).map(|_| normal.sample(rng)).collect())
                .collect()
        }
        SubmissionRule::Scale { factor } => own_data
            .iter()
            .map(|points| points.iter().map(|x| x * factor).collect())
            .collect(),
        SubmissionRule::Withhold { fraction } => own_data
            .iter()
            .map(|points| {
                let keep = ((1.0 - fraction) * points.len() as f64).ceil() as usize;
                points[..keep.min(points.len())].to_vec()
            })
            .collect(),
    }
}

/// Recovers the mean of everyone else's points from a pooled mean over
/// `total_count` points: `(total * pooled - own_sum) / (total - own_count)`.
pub fn free_rider_estimate(
    total_count: f64,
    pooled_allocation: f64,
    own_submitted_sum: f64,
    own_submitted_count: f64,
) -> Result<f64> {
    if own_submitted_count == 0.0 {
        return Ok(pooled_allocation);
    }
    if total_count <= own_submitted_count {
        return Err(Error::NothingToDiscount {
            own: own_submitted_count,
            total: total_count,
        });
    }
    Ok((total_count * pooled_allocation - own_submitted_sum) / (total_count - own_submitted_count))
}
