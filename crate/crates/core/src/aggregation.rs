//! Entropy and accuracy weighted aggregation of LiteModels and of each
//! same-tier group of local models.

use serde::{Deserialize, Serialize};

use crate::nn::ParamVector;
use crate::{Error, Result};

/// How a weighted sum of client models is folded into the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationForm {
    /// `global + sum_i w_i * (client_i - global)`: a weighted average of
    /// client results.
    #[default]
    Delta,
    /// `global + sum_i w_i * client_i`. Grows without bound; kept for comparison.
    Literal,
}

/// Simplex weights aligned with the members they were computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub weights: Vec<f64>,
}

impl AggregationWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// `w = (softmax(entropies) + softmax(accuracies)) / 2`.
pub fn compute_weights(entropies: &[f64], accuracies: &[f64]) -> Result<AggregationWeights> {
    if entropies.len() != accuracies.len() {
        return Err(Error::dim("accuracies", entropies.len(), accuracies.len()));
    }
    if entropies.is_empty() {
        return Err(Error::Contract("no members to weight".into()));
    }
    if entropies.iter().chain(accuracies).any(|v| !v.is_finite()) {
        return Err(Error::Contract("entropy and accuracy must be finite".into()));
    }
    let h = softmax(entropies);
    let a = softmax(accuracies);
    Ok(AggregationWeights {
        weights: h.iter().zip(&a).map(|(x, y)| 0.5 * (x + y)).collect(),
    })
}

/// Folds `members` into `global` with the given weights.
pub fn aggregate(
    global: &ParamVector,
    members: &[&ParamVector],
    weights: &AggregationWeights,
    form: AggregationForm,
) -> Result<ParamVector> {
    if members.len() != weights.len() {
        return Err(Error::dim("weights", members.len(), weights.len()));
    }
    for m in members {
        global.check_compatible(m)?;
    }
    let mut out = global.clone();
    let base = global.values();
    for (member, &w) in members.iter().zip(&weights.weights) {
        for ((o, &m), &g) in out.values_mut().iter_mut().zip(member.values()).zip(base) {
            *o += match form {
                AggregationForm::Delta => w * (m - g),
                AggregationForm::Literal => w * m,
            };
        }
    }
    Ok(out)
}

/// Same-tier local models returned this round.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGroup {
    pub tier_id: usize,
    pub members: Vec<(usize, ParamVector)>,
}

/// The global LiteModel and one global model per tier (index `tier_id - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModels {
    pub lite: ParamVector,
    pub tiers: Vec<ParamVector>,
}

impl GlobalModels {
    pub fn tier(&self, tier_id: usize) -> Result<&ParamVector> {
        tier_id
            .checked_sub(1)
            .and_then(|i| self.tiers.get(i))
            .ok_or_else(|| Error::Contract(format!("unknown tier id {tier_id}")))
    }
}

/// Aggregates LiteModels over all participants and local models per tier
/// group. Tiers without members keep their previous global.
pub fn aggregate_round(
    globals: &GlobalModels,
    lite_members: &[ParamVector],
    lite_weights: &AggregationWeights,
    groups: &[(ModelGroup, AggregationWeights)],
    form: AggregationForm,
) -> Result<GlobalModels> {
    let lite_refs: Vec<&ParamVector> = lite_members.iter().collect();
    let lite = aggregate(&globals.lite, &lite_refs, lite_weights, form)?;
    let mut tiers = globals.tiers.clone();
    for (group, weights) in groups {
        if group.members.is_empty() {
            continue;
        }
        let slot = group
            .tier_id
            .checked_sub(1)
            .filter(|&i| i < tiers.len())
            .ok_or_else(|| Error::Contract(format!("unknown tier id {}", group.tier_id)))?;
        let refs: Vec<&ParamVector> = group.members.iter().map(|(_, p)| p).collect();
        tiers[slot] = aggregate(&globals.tiers[slot], &refs, weights, form)?;
    }
    Ok(GlobalModels { lite, tiers })
}
