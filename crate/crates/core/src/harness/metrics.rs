use serde::{Deserialize, Serialize};

use crate::environment::{OutcomeLabel, StepOutcome};
use crate::error::{DsaError, Result};

/// Fractions of slots per outcome label, plus the mean reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSummary {
    pub success: f64,
    pub pu_collision: f64,
    pub su_collision: f64,
    pub idle: f64,
    pub mean_reward: f64,
}

impl RateSummary {
    pub fn partition_sum(&self) -> f64 {
        self.success + self.pu_collision + self.su_collision + self.idle
    }

    fn mean_of(items: &[RateSummary]) -> RateSummary {
        let n = items.len() as f64;
        let mut acc = RateSummary::default();
        for r in items {
            acc.success += r.success;
            acc.pu_collision += r.pu_collision;
            acc.su_collision += r.su_collision;
            acc.idle += r.idle;
            acc.mean_reward += r.mean_reward;
        }
        RateSummary {
            success: acc.success / n,
            pu_collision: acc.pu_collision / n,
            su_collision: acc.su_collision / n,
            idle: acc.idle / n,
            mean_reward: acc.mean_reward / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub per_su: Vec<RateSummary>,
    /// Arithmetic mean over SUs.
    pub aggregate: RateSummary,
    /// Exploration rate each SU acted with.
    pub epsilon: Vec<f64>,
}

/// Summarizes one iteration. `outcomes[t][l]` is SU `l`'s outcome in slot `t`.
pub fn compute_metrics(iteration: usize, outcomes: &[Vec<StepOutcome>], epsilon: Vec<f64>) -> Result<IterationMetrics> {
    let t = outcomes.len();
    if t == 0 {
        return Err(DsaError::Contract("cannot summarize an iteration with no slots".into()));
    }
    let n_sus = outcomes[0].len();
    if outcomes.iter().any(|slot| slot.len() != n_sus) {
        return Err(DsaError::Contract("every slot needs one outcome per SU".into()));
    }
    let per_su: Vec<RateSummary> = (0..n_sus)
        .map(|l| {
            let mut counts = [0usize; 4];
            let mut reward = 0.0;
            for slot in outcomes {
                let o = &slot[l];
                counts[match o.label {
                    OutcomeLabel::Success => 0,
                    OutcomeLabel::CollisionWithPu => 1,
                    OutcomeLabel::CollisionWithSu => 2,
                    OutcomeLabel::Idle => 3,
                }] += 1;
                reward += o.reward;
            }
            let tf = t as f64;
            RateSummary {
                success: counts[0] as f64 / tf,
                pu_collision: counts[1] as f64 / tf,
                su_collision: counts[2] as f64 / tf,
                idle: counts[3] as f64 / tf,
                mean_reward: reward / tf,
            }
        })
        .collect();
    let aggregate = RateSummary::mean_of(&per_su);
    Ok(IterationMetrics {
        iteration,
        per_su,
        aggregate,
        epsilon,
    })
}
