//! Simulated heterogeneous clients.
//!
//! A client owns a data shard and a speed factor `psi` (simulated seconds per
//! sample per unit of model cost). Epoch durations follow
//! `psi * shard_size * cost_ratio * u` with jitter `u ~ U[0.95, 1.05]`; the
//! actual parameter updates are real SGD steps so accuracy is meaningful.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{label_entropy, Dataset};
use crate::nn::{self, accuracy, forward, gradient, loss_mutual, sgd_step, LossWeights, NetworkSpec, ParamVector};
use crate::seed::{self, SimRng};
use crate::{Error, Result};

pub const JITTER_LOW: f64 = 0.95;
pub const JITTER_HIGH: f64 = 1.05;
pub const MAX_BATCH: usize = 64;

/// One allocatable model architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTier {
    pub tier_id: usize,
    pub name: String,
    pub spec: NetworkSpec,
    /// Per-epoch training time relative to the LiteModel.
    pub cost_ratio: f64,
}

impl ModelTier {
    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }
}

/// The LiteModel plus the `delta` local tiers, numbered `1..=delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TierCatalog {
    lite: ModelTier,
    tiers: Vec<ModelTier>,
    min_params: usize,
}

impl TierCatalog {
    pub fn new(lite: ModelTier, tiers: Vec<ModelTier>, min_params: usize) -> Result<Self> {
        if tiers.is_empty() {
            return Err(Error::config("tiers", "catalog needs at least one local tier"));
        }
        if !(lite.cost_ratio > 0.0) {
            return Err(Error::config("tiers.lite.cost_ratio", "must be positive"));
        }
        for (i, tier) in tiers.iter().enumerate() {
            if tier.tier_id != i + 1 {
                return Err(Error::config(
                    "tiers",
                    format!(
                        "tier ids must run 1..=delta in order, found {} at position {}",
                        tier.tier_id,
                        i + 1
                    ),
                ));
            }
            if !(tier.cost_ratio >= 1.0) {
                return Err(Error::config(
                    format!("tiers.{}.cost_ratio", tier.name),
                    "must be at least 1",
                ));
            }
            if tier.param_count() < min_params {
                return Err(Error::config(
                    format!("tiers.{}", tier.name),
                    format!("{} parameters is below the minimum {min_params}", tier.param_count()),
                ));
            }
            if tier.spec.input_dim() != lite.spec.input_dim() || tier.spec.output_dim() != lite.spec.output_dim() {
                return Err(Error::config(
                    format!("tiers.{}.layers", tier.name),
                    "input and output dims must match the LiteModel",
                ));
            }
        }
        for a in &tiers {
            for b in &tiers {
                if a.param_count() < b.param_count() && a.cost_ratio > b.cost_ratio {
                    return Err(Error::config(
                        "tiers",
                        format!("cost ratio of {} exceeds that of larger tier {}", a.name, b.name),
                    ));
                }
            }
        }
        Ok(Self {
            lite,
            tiers,
            min_params,
        })
    }

    pub fn lite(&self) -> &ModelTier {
        &self.lite
    }

    pub fn tiers(&self) -> &[ModelTier] {
        &self.tiers
    }

    /// Number of local tiers.
    pub fn delta(&self) -> usize {
        self.tiers.len()
    }

    pub fn min_params(&self) -> usize {
        self.min_params
    }

    pub fn tier(&self, tier_id: usize) -> Result<&ModelTier> {
        tier_id
            .checked_sub(1)
            .and_then(|i| self.tiers.get(i))
            .ok_or_else(|| Error::Contract(format!("unknown tier id {tier_id}")))
    }
}

#[derive(Debug, Clone)]
pub struct ClientProfile {
    pub client_id: usize,
    psi0: f64,
    psi: f64,
    dataset: Dataset,
    pub drift_sigma: f64,
    entropy: f64,
}

impl ClientProfile {
    pub fn new(client_id: usize, psi: f64, dataset: Dataset, drift_sigma: f64) -> Result<Self> {
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(Error::config(
                "psi",
                format!("speed factor must be positive, got {psi}"),
            ));
        }
        if !(drift_sigma >= 0.0) {
            return Err(Error::config("drift_sigma", "must be non-negative"));
        }
        let entropy = label_entropy(&dataset);
        Ok(Self {
            client_id,
            psi0: psi,
            psi,
            dataset,
            drift_sigma,
            entropy,
        })
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn base_psi(&self) -> f64 {
        self.psi0
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn data_size(&self) -> usize {
        self.dataset.len()
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// One step of the clamped geometric random walk on `psi`.
    pub fn drift<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let z: f64 = rng.sample(StandardNormal);
        self.psi = (self.psi * (self.drift_sigma * z).exp()).clamp(self.psi0 / 10.0, self.psi0 * 10.0);
    }

    pub fn reset(&mut self) {
        self.psi = self.psi0;
    }

    /// Per-epoch time for a model of the given relative cost, jitter applied.
    pub fn epoch_time_with_jitter(&self, cost_ratio: f64, jitter: f64) -> f64 {
        self.psi * self.dataset.len() as f64 * cost_ratio * jitter
    }
}

pub fn sample_jitter<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(JITTER_LOW..=JITTER_HIGH)
}

/// Simulated duration of one epoch of `tier` on this client.
pub fn epoch_time(profile: &ClientProfile, tier: &ModelTier, jitter_seed: u64) -> f64 {
    let u = sample_jitter(&mut seed::rng(jitter_seed, &[]));
    profile.epoch_time_with_jitter(tier.cost_ratio, u)
}

/// SGD hyperparameters for client-side training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    /// Weights of the local model's loss (supervised, distillation).
    pub local_weights: LossWeights,
    /// Weights of the LiteModel's loss.
    pub lite_weights: LossWeights,
}

/// Result of the one-epoch LiteModel assessment.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub time: f64,
    pub lite_params: ParamVector,
}

fn minibatches(rng: &mut SimRng, n: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(MAX_BATCH).map(|c| c.to_vec()).collect()
}

fn time_rng(seed: u64) -> SimRng {
    seed::rng(seed, &[0])
}

fn data_rng(seed: u64) -> SimRng {
    seed::rng(seed, &[1])
}

/// Trains the LiteModel for one epoch on the client's shard and reports the
/// simulated time it took.
pub fn assess(
    profile: &ClientProfile,
    lite: &ModelTier,
    lite_params: &ParamVector,
    lr: f64,
    seed: u64,
) -> Result<Assessment> {
    let mut params = lite_params.clone();
    let mut rng = data_rng(seed);
    let ds = profile.dataset();
    for idx in minibatches(&mut rng, ds.len()) {
        let batch = ds.batch(&idx);
        let (_, grad) = gradient(&params, &lite.spec, batch.inputs.view(), |logits| {
            nn::cross_entropy(logits, &batch.labels)
        })?;
        params = sgd_step(&params, &grad, lr)?;
    }
    let u = sample_jitter(&mut time_rng(seed));
    Ok(Assessment {
        time: profile.epoch_time_with_jitter(lite.cost_ratio, u),
        lite_params: params,
    })
}

/// What a client sends back after local training.
#[derive(Debug, Clone)]
pub struct ClientRoundReport {
    pub client_id: usize,
    pub assess_time: f64,
    pub local_time: f64,
    pub acc: f64,
    pub entropy: f64,
    pub lite_params: ParamVector,
    pub local_params: ParamVector,
    pub tier_id: usize,
    pub epochs: usize,
}

impl ClientRoundReport {
    /// Total compute time, assessment plus local training.
    pub fn compute_time(&self) -> f64 {
        self.assess_time + self.local_time
    }
}

/// Mutual-distillation training of the local model and the LiteModel for
/// `epochs` epochs.
///
/// For each minibatch the local model steps first against the frozen
/// LiteModel logits, then the LiteModel steps against the updated local
/// model. Accuracy is the local model's accuracy on `test`.
#[allow(clippy::too_many_arguments)]
pub fn local_train(
    profile: &ClientProfile,
    assessment: Assessment,
    local_params: &ParamVector,
    lite: &ModelTier,
    tier: &ModelTier,
    epochs: usize,
    settings: &TrainSettings,
    seed: u64,
    test: &Dataset,
) -> Result<ClientRoundReport> {
    if epochs < 1 {
        return Err(Error::Contract(
            "every participating client trains at least one epoch".into(),
        ));
    }
    let mut lite_params = assessment.lite_params;
    let mut local = local_params.clone();
    let ds = profile.dataset();
    let mut data = data_rng(seed);
    let mut clock = time_rng(seed);
    let mut local_time = 0.0;

    for _ in 0..epochs {
        for idx in minibatches(&mut data, ds.len()) {
            let batch = ds.batch(&idx);
            let inputs = batch.inputs.view();

            let teacher = forward(&lite_params, &lite.spec, inputs)?;
            let (_, grad) = gradient(&local, &tier.spec, inputs, |logits| {
                let l = loss_mutual(logits, &teacher, &batch.labels, settings.local_weights)?;
                Ok((l.total, l.grad))
            })?;
            local = sgd_step(&local, &grad, settings.lr)?;

            let teacher = forward(&local, &tier.spec, inputs)?;
            let (_, grad) = gradient(&lite_params, &lite.spec, inputs, |logits| {
                let l = loss_mutual(logits, &teacher, &batch.labels, settings.lite_weights)?;
                Ok((l.total, l.grad))
            })?;
            lite_params = sgd_step(&lite_params, &grad, settings.lr)?;
        }
        let u_local = sample_jitter(&mut clock);
        let u_lite = sample_jitter(&mut clock);
        local_time += profile.epoch_time_with_jitter(tier.cost_ratio, u_local)
            + profile.epoch_time_with_jitter(lite.cost_ratio, u_lite);
    }

    let logits = forward(&local, &tier.spec, test.inputs().view())?;
    Ok(ClientRoundReport {
        client_id: profile.client_id,
        assess_time: assessment.time,
        local_time,
        acc: accuracy(&logits, test.labels()),
        entropy: profile.entropy(),
        lite_params,
        local_params: local,
        tier_id: tier.tier_id,
        epochs,
    })
}

/// Slowest minus fastest client time. With `include_assessment` the times are
/// assessment plus local training, otherwise local training only.
pub fn straggling_latency(reports: &[ClientRoundReport], include_assessment: bool) -> Result<f64> {
    let times: Vec<f64> = reports
        .iter()
        .map(|r| {
            if include_assessment {
                r.compute_time()
            } else {
                r.local_time
            }
        })
        .collect();
    spread(&times)
}

/// `max - min` over at least two values.
pub fn spread(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Contract(format!(
            "straggling latency needs at least 2 clients, got {}",
            times.len()
        )));
    }
    let max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::nn::Activation;
    use ndarray::Array2;

    fn tier(id: usize, sizes: Vec<usize>, cost: f64) -> ModelTier {
        ModelTier {
            tier_id: id,
            name: format!("t{id}"),
            spec: NetworkSpec::new(sizes, Activation::Relu).unwrap(),
            cost_ratio: cost,
        }
    }

    fn lite() -> ModelTier {
        tier(0, vec![4, 6, 3], 1.0)
    }

    fn profile(psi: f64, n: usize) -> ClientProfile {
        let ds = gen_blobs(3, 4, n.div_ceil(3), 0.3, 5).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        ClientProfile::new(0, psi, ds.subset(&idx).unwrap(), 0.02).unwrap()
    }

    fn settings(lr: f64, local: (f64, f64), lite: (f64, f64)) -> TrainSettings {
        TrainSettings {
            lr,
            local_weights: LossWeights::new(local.0, local.1).unwrap(),
            lite_weights: LossWeights::new(lite.0, lite.1).unwrap(),
        }
    }

    fn report(id: usize, assess: f64, local: f64) -> ClientRoundReport {
        let p = ParamVector::new("x", vec![]);
        ClientRoundReport {
            client_id: id,
            assess_time: assess,
            local_time: local,
            acc: 0.5,
            entropy: 1.0,
            lite_params: p.clone(),
            local_params: p,
            tier_id: 1,
            epochs: 1,
        }
    }

    #[test]
    fn unit_epoch_time() {
        let p = profile(1.0, 100);
        assert_eq!(p.epoch_time_with_jitter(1.0, 1.0), 100.0);
        let t1 = epoch_time(&p, &tier(1, vec![4, 3], 1.0), 11);
        let t2 = epoch_time(&p, &tier(1, vec![4, 3], 2.0), 11);
        assert!((t2 - 2.0 * t1).abs() < 1e-12);
    }

    #[test]
    fn jitter_mean_is_one() {
        let p = profile(1.0, 1);
        let t = tier(1, vec![4, 3], 1.0);
        let n = 10_000;
        let mean: f64 = (0..n).map(|s| epoch_time(&p, &t, s)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-2);
    }

    #[test]
    fn assessment_time_tracks_speed() {
        let slow = profile(2.0, 30);
        let fast = profile(1.0, 30);
        let params = lite().spec.zero_params();
        let a = assess(&slow, &lite(), &params, 0.1, 1).unwrap();
        let b = assess(&fast, &lite(), &params, 0.1, 2).unwrap();
        let ratio = a.time / b.time;
        assert!((2.0 * 0.9..=2.0 * 1.11).contains(&ratio), "ratio {ratio}");
        let again = assess(&slow, &lite(), &params, 0.1, 1).unwrap();
        assert_eq!(a.time, again.time);
        assert_eq!(a.lite_params, again.lite_params);
    }

    #[test]
    fn single_sample_assessment_takes_one_step() {
        let p = profile(1.0, 1);
        let mut rng = seed::rng(3, &[]);
        let params = lite().spec.init_params(&mut rng);
        let a = assess(&p, &lite(), &params, 0.05, 0).unwrap();
        let batch = p.dataset().as_batch();
        let (_, g) = gradient(&params, &lite().spec, batch.inputs.view(), |l| {
            nn::cross_entropy(l, &batch.labels)
        })
        .unwrap();
        assert_eq!(a.lite_params, sgd_step(&params, &g, 0.05).unwrap());
    }

    #[test]
    fn zero_epochs_is_a_contract_violation() {
        let p = profile(1.0, 6);
        let l = lite();
        let a = assess(&p, &l, &l.spec.zero_params(), 0.1, 0).unwrap();
        let err = local_train(
            &p,
            a,
            &l.spec.zero_params(),
            &l,
            &l,
            0,
            &settings(0.1, (0.5, 0.5), (0.5, 0.5)),
            0,
            p.dataset(),
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn one_epoch_descends() {
        let p = profile(1.0, 1);
        let l = lite();
        let t = tier(1, vec![4, 8, 3], 2.0);
        let mut rng = seed::rng(8, &[]);
        let lite_params = l.spec.init_params(&mut rng);
        let local = t.spec.init_params(&mut rng);
        let batch = p.dataset().as_batch();
        let loss = |params: &ParamVector| {
            let logits = forward(params, &t.spec, batch.inputs.view()).unwrap();
            nn::cross_entropy(&logits, &batch.labels).unwrap().0
        };
        let a = Assessment { time: 1.0, lite_params };
        let r = local_train(
            &p,
            a,
            &local,
            &l,
            &t,
            1,
            &settings(0.01, (1.0, 0.0), (1.0, 0.0)),
            4,
            p.dataset(),
        )
        .unwrap();
        assert!(loss(&r.local_params) < loss(&local));
    }

    #[test]
    fn mirrored_models_stay_identical_without_distillation() {
        let p = profile(1.0, 20);
        let l = lite();
        let mut rng = seed::rng(21, &[]);
        let params = l.spec.init_params(&mut rng);
        let a = Assessment {
            time: 1.0,
            lite_params: params.clone(),
        };
        let r = local_train(
            &p,
            a,
            &params,
            &l,
            &l,
            5,
            &settings(0.05, (1.0, 0.0), (1.0, 0.0)),
            9,
            p.dataset(),
        )
        .unwrap();
        for (x, y) in r.lite_params.values().iter().zip(r.local_params.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn mirrored_models_diverge_only_at_second_order() {
        // Alternating frozen-teacher steps break the symmetry by O(lr^2):
        // halving lr should cut the gap roughly fourfold.
        let p = profile(1.0, 20);
        let l = lite();
        let mut rng = seed::rng(22, &[]);
        let params = l.spec.init_params(&mut rng);
        let gap = |lr: f64| {
            let a = Assessment {
                time: 1.0,
                lite_params: params.clone(),
            };
            let r = local_train(
                &p,
                a,
                &params,
                &l,
                &l,
                1,
                &settings(lr, (0.5, 0.5), (0.5, 0.5)),
                9,
                p.dataset(),
            )
            .unwrap();
            r.lite_params
                .values()
                .iter()
                .zip(r.local_params.values())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        };
        let (g1, g2) = (gap(1e-3), gap(5e-4));
        assert!(g1 < 1e-5, "gap {g1}");
        let ratio = g1 / g2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn local_time_bounds_and_prefix_consistency() {
        let p = profile(1.5, 30);
        let l = lite();
        let t = tier(1, vec![4, 8, 3], 3.0);
        let s = settings(0.05, (0.4, 0.6), (0.5, 0.5));
        let run = |tau: usize| {
            let a = Assessment {
                time: 1.0,
                lite_params: l.spec.zero_params(),
            };
            local_train(&p, a, &t.spec.zero_params(), &l, &t, tau, &s, 77, p.dataset()).unwrap()
        };
        let per_epoch = p.psi() * 30.0 * (3.0 + 1.0);
        let r3 = run(3);
        let r4 = run(4);
        assert!(r3.local_time >= 3.0 * per_epoch * JITTER_LOW);
        assert!(r3.local_time <= 3.0 * per_epoch * JITTER_HIGH);
        let extra = r4.local_time - r3.local_time;
        assert!(extra >= per_epoch * JITTER_LOW - 1e-9 && extra <= per_epoch * JITTER_HIGH + 1e-9);
        assert_eq!(r3.local_time, run(3).local_time);
    }

    #[test]
    fn report_is_deterministic() {
        let p = profile(1.0, 25);
        let l = lite();
        let t = tier(1, vec![4, 8, 3], 2.0);
        let s = settings(0.05, (0.4, 0.6), (0.5, 0.5));
        let run = || {
            let a = assess(&p, &l, &l.spec.init_params(&mut seed::rng(1, &[])), 0.05, 3).unwrap();
            local_train(
                &p,
                a,
                &t.spec.init_params(&mut seed::rng(2, &[])),
                &l,
                &t,
                3,
                &s,
                5,
                p.dataset(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.local_params, b.local_params);
        assert_eq!(a.lite_params, b.lite_params);
        assert_eq!(a.local_time.to_bits(), b.local_time.to_bits());
        assert_eq!(a.acc, b.acc);
    }

    #[test]
    fn training_on_blobs_reaches_high_accuracy() {
        let train = gen_blobs(4, 16, 30, 0.3, 1).unwrap();
        let test = gen_blobs(4, 16, 50, 0.3, 2).unwrap();
        let p = ClientProfile::new(0, 1.0, train, 0.0).unwrap();
        let l = tier(0, vec![16, 8, 4], 1.0);
        let t = tier(1, vec![16, 16, 4], 2.0);
        let s = settings(0.1, (0.4, 0.6), (0.5, 0.5));
        let a = assess(&p, &l, &l.spec.init_params(&mut seed::rng(1, &[])), 0.1, 0).unwrap();
        let r = local_train(
            &p,
            a,
            &t.spec.init_params(&mut seed::rng(2, &[])),
            &l,
            &t,
            20,
            &s,
            0,
            &test,
        )
        .unwrap();
        assert!(r.acc >= 0.9, "acc {}", r.acc);
    }

    #[test]
    fn no_parameter_diverges_over_long_training() {
        let train = gen_blobs(4, 16, 20, 0.3, 3).unwrap();
        let p = ClientProfile::new(0, 1.0, train, 0.0).unwrap();
        let l = tier(0, vec![16, 8, 4], 1.0);
        let t = tier(1, vec![16, 32, 4], 4.0);
        let s = settings(0.0003, (0.4, 0.6), (0.5, 0.5));
        let a = assess(&p, &l, &l.spec.init_params(&mut seed::rng(1, &[])), 0.0003, 0).unwrap();
        let r = local_train(
            &p,
            a,
            &t.spec.init_params(&mut seed::rng(2, &[])),
            &l,
            &t,
            200,
            &s,
            0,
            p.dataset(),
        )
        .unwrap();
        assert!(r.local_params.is_finite() && r.lite_params.is_finite());
    }

    #[test]
    fn straggling_latency_examples() {
        let reports = vec![report(0, 1.0, 4.0), report(1, 2.0, 6.0), report(2, 3.0, 9.0)];
        assert_eq!(straggling_latency(&reports, true).unwrap(), 7.0);
        assert_eq!(straggling_latency(&reports, false).unwrap(), 5.0);
        assert_eq!(spread(&[3.5, 9.25]).unwrap(), 5.75);
        assert_eq!(spread(&[4.0, 4.0, 4.0]).unwrap(), 0.0);
        assert!(straggling_latency(&reports[..1], true).is_err());
    }

    #[test]
    fn straggling_latency_is_translation_invariant() {
        let times = [3.0, 8.5, 1.25, 6.0];
        let shifted: Vec<f64> = times.iter().map(|t| t + 1000.0).collect();
        assert!((spread(&times).unwrap() - spread(&shifted).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn drift_stays_within_clamp() {
        let mut p = profile(2.0, 3);
        p.drift_sigma = 1.5;
        let mut rng = seed::rng(0, &[]);
        for _ in 0..1000 {
            p.drift(&mut rng);
            assert!(p.psi() >= 0.2 - 1e-12 && p.psi() <= 20.0 + 1e-12);
        }
        p.reset();
        assert_eq!(p.psi(), 2.0);
    }

    #[test]
    fn catalog_validation() {
        let ok = TierCatalog::new(
            lite(),
            vec![tier(1, vec![4, 8, 3], 2.0), tier(2, vec![4, 32, 3], 8.0)],
            10,
        );
        assert!(ok.is_ok());
        assert_eq!(ok.unwrap().delta(), 2);
        // cost not monotone in size
        assert!(TierCatalog::new(
            lite(),
            vec![tier(1, vec![4, 8, 3], 9.0), tier(2, vec![4, 32, 3], 8.0)],
            10
        )
        .is_err());
        // below parameter threshold
        assert!(TierCatalog::new(lite(), vec![tier(1, vec![4, 3], 1.0)], 100).is_err());
        let _ = Array2::<f64>::zeros((1, 1));
    }
}
