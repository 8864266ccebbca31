//! Tier allocation agent: one categorical head per selected client.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ppo::{Policy, PpoAgent};
use super::{log_softmax, ActMode};
use crate::client::TierCatalog;
use crate::nn::argmax;
use crate::{Error, Result};

/// Tier id (`1..=delta`) for each selected client, in selection order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationAction {
    pub tiers: Vec<usize>,
}

impl AllocationAction {
    /// Every tier exists in the catalog and meets its parameter floor.
    pub fn validate(&self, catalog: &TierCatalog) -> Result<()> {
        for &id in &self.tiers {
            let tier = catalog.tier(id)?;
            if tier.param_count() < catalog.min_params() {
                return Err(Error::Contract(format!(
                    "tier {id} has {} parameters, below {}",
                    tier.param_count(),
                    catalog.min_params()
                )));
            }
        }
        Ok(())
    }
}

/// `heads` independent categorical distributions over `choices` tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationPolicy {
    pub heads: usize,
    pub choices: usize,
}

impl AllocationPolicy {
    fn head<'a>(&self, logits: &'a [f64], i: usize) -> &'a [f64] {
        &logits[i * self.choices..(i + 1) * self.choices]
    }
}

impl Policy for AllocationPolicy {
    type Action = AllocationAction;

    fn output_dim(&self) -> usize {
        self.heads * self.choices
    }

    fn heads(&self) -> usize {
        self.heads
    }

    fn log_prob(&self, logits: &[f64], action: &AllocationAction) -> f64 {
        action
            .tiers
            .iter()
            .enumerate()
            .map(|(i, &tier)| log_softmax(self.head(logits, i))[tier - 1])
            .sum()
    }

    fn grad_log_prob(&self, logits: &[f64], action: &AllocationAction) -> Vec<f64> {
        let mut grad = Vec::with_capacity(logits.len());
        for (i, &tier) in action.tiers.iter().enumerate() {
            let lp = log_softmax(self.head(logits, i));
            grad.extend(lp.iter().enumerate().map(|(j, l)| f64::from(j + 1 == tier) - l.exp()));
        }
        grad
    }
}

/// Assessment times divided by their minimum.
pub fn ppo1_state(assess_times: &[f64]) -> Result<Vec<f64>> {
    if assess_times.is_empty() {
        return Err(Error::Contract("no assessment times".into()));
    }
    if let Some(bad) = assess_times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Contract(format!("assessment time must be positive, got {bad}")));
    }
    let min = assess_times.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(assess_times.iter().map(|t| t / min).collect())
}

/// Samples (or, greedily, takes the argmax of) every head.
/// Returns the action, its joint log-probability and the critic's value.
pub fn ppo1_act<R: Rng + ?Sized>(
    agent: &PpoAgent<AllocationPolicy>,
    state: &[f64],
    mode: ActMode,
    rng: &mut R,
) -> Result<(AllocationAction, f64, f64)> {
    let policy = *agent.policy();
    if state.len() != policy.heads {
        return Err(Error::dim("heads", policy.heads, state.len()));
    }
    let logits = agent.actor_logits(state)?;
    let tiers = (0..policy.heads)
        .map(|i| {
            let head = policy.head(&logits, i);
            match mode {
                ActMode::Greedy => argmax(head) + 1,
                ActMode::Sample => {
                    let lp = log_softmax(head);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = lp.len() - 1;
                    for (j, l) in lp.iter().enumerate() {
                        acc += l.exp();
                        if u < acc {
                            pick = j;
                            break;
                        }
                    }
                    pick + 1
                }
            }
        })
        .collect();
    let action = AllocationAction { tiers };
    let log_prob = policy.log_prob(&logits, &action);
    Ok((action, log_prob, agent.value(state)?))
}

/// `md - max(per_epoch) / min(per_epoch)` with `per_epoch = local_time / epochs`.
pub fn ppo1_reward(local_times: &[f64], epochs: &[usize], md: f64) -> Result<f64> {
    if local_times.len() != epochs.len() {
        return Err(Error::dim("epochs", local_times.len(), epochs.len()));
    }
    if local_times.is_empty() {
        return Err(Error::Contract("no local times".into()));
    }
    if epochs.contains(&0) {
        return Err(Error::Contract("epoch count must be at least 1".into()));
    }
    if local_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Contract("local times must be positive".into()));
    }
    let per_epoch: Vec<f64> = local_times.iter().zip(epochs).map(|(t, &e)| t / e as f64).collect();
    let max = per_epoch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = per_epoch.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(md - max / min)
}
