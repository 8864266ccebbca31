//! Training-intensity agent: a Dirichlet policy over the epoch-share simplex.
//!
//! The actor's logits map to concentrations `softplus(l) + 1`. A sampled
//! share vector is turned into integer epoch counts that sum to the round's
//! budget with every client getting at least one epoch.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::ppo::{Policy, PpoAgent};
use super::{sigmoid, softplus, ActMode, AllocationAction};
use crate::client::TierCatalog;
use crate::data::largest_remainder;
use crate::{Error, Result};

const SHARE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityAction {
    /// Epoch shares on the simplex.
    pub sigma: Vec<f64>,
    /// Integer epochs per client.
    pub tau: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntensityPolicy {
    pub k: usize,
}

impl IntensityPolicy {
    pub fn concentrations(logits: &[f64]) -> Vec<f64> {
        logits.iter().map(|&l| softplus(l) + 1.0).collect()
    }
}

/// Log-density of Dirichlet(`conc`) at `sigma`.
pub(crate) fn dirichlet_log_density(conc: &[f64], sigma: &[f64]) -> f64 {
    let total: f64 = conc.iter().sum();
    let norm = ln_gamma(total) - conc.iter().map(|&c| ln_gamma(c)).sum::<f64>();
    norm + conc
        .iter()
        .zip(sigma)
        .map(|(c, s)| (c - 1.0) * s.max(SHARE_FLOOR).ln())
        .sum::<f64>()
}

impl Policy for IntensityPolicy {
    type Action = IntensityAction;

    fn output_dim(&self) -> usize {
        self.k
    }

    fn heads(&self) -> usize {
        self.k
    }

    fn log_prob(&self, logits: &[f64], action: &IntensityAction) -> f64 {
        dirichlet_log_density(&Self::concentrations(logits), &action.sigma)
    }

    fn grad_log_prob(&self, logits: &[f64], action: &IntensityAction) -> Vec<f64> {
        let conc = Self::concentrations(logits);
        let dg_total = digamma(conc.iter().sum());
        logits
            .iter()
            .zip(&conc)
            .zip(&action.sigma)
            .map(|((&l, &c), &s)| (dg_total - digamma(c) + s.max(SHARE_FLOOR).ln()) * sigmoid(l))
            .collect()
    }
}

/// Per-client time estimate after tier allocation:
/// normalised assessment time times the tier's cost ratio.
pub fn ppo2_state(normalized_assess: &[f64], tiers: &AllocationAction, catalog: &TierCatalog) -> Result<Vec<f64>> {
    if normalized_assess.len() != tiers.tiers.len() {
        return Err(Error::dim("tiers", normalized_assess.len(), tiers.tiers.len()));
    }
    normalized_assess
        .iter()
        .zip(&tiers.tiers)
        .map(|(&t, &id)| Ok(catalog.tier(id)?.cost_ratio * t))
        .collect()
}

/// Integer epochs following `sigma` that sum to `total`, each at least one.
///
/// Largest-remainder rounding first; clients rounded to zero are lifted to
/// one and the excess is taken back from the largest allocations.
pub fn allocate_intensity(sigma: &[f64], total: usize) -> Result<Vec<usize>> {
    let k = sigma.len();
    if k == 0 {
        return Err(Error::Contract("no clients to allocate".into()));
    }
    if total < k {
        return Err(Error::config(
            "total_intensity",
            format!("budget {total} cannot give {k} clients one epoch each"),
        ));
    }
    let mut tau = largest_remainder(sigma, total);
    for t in &mut tau {
        *t = (*t).max(1);
    }
    let mut assigned: usize = tau.iter().sum();
    while assigned > total {
        let largest = (0..k)
            .max_by(|&a, &b| tau[a].cmp(&tau[b]).then(b.cmp(&a)))
            .expect("k >= 1");
        tau[largest] -= 1;
        assigned -= 1;
    }
    Ok(tau)
}

fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = conc
        .iter()
        .map(|&c| Gamma::new(c, 1.0).expect("concentration >= 1").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Samples shares (or takes the Dirichlet mean, greedily) and rounds them
/// into epochs. Returns the action, its log-density and the critic's value.
pub fn ppo2_act<R: Rng + ?Sized>(
    agent: &PpoAgent<IntensityPolicy>,
    state: &[f64],
    total: usize,
    mode: ActMode,
    rng: &mut R,
) -> Result<(IntensityAction, f64, f64)> {
    let policy = *agent.policy();
    if state.len() != policy.k {
        return Err(Error::dim("state", policy.k, state.len()));
    }
    if total < policy.k {
        return Err(Error::config(
            "total_intensity",
            format!("budget {total} is below the {} selected clients", policy.k),
        ));
    }
    let logits = agent.actor_logits(state)?;
    let conc = IntensityPolicy::concentrations(&logits);
    let sigma = match mode {
        ActMode::Greedy => {
            let sum: f64 = conc.iter().sum();
            conc.iter().map(|c| c / sum).collect()
        }
        ActMode::Sample => sample_dirichlet(&conc, rng),
    };
    let tau = allocate_intensity(&sigma, total)?;
    let action = IntensityAction { sigma, tau };
    let log_prob = policy.log_prob(&logits, &action);
    Ok((action, log_prob, agent.value(state)?))
}

/// `min(local_times) - max(local_times)`: the negated straggling latency.
pub fn ppo2_reward(local_times: &[f64]) -> Result<f64> {
    crate::client::spread(local_times).map(|s| -s)
}
