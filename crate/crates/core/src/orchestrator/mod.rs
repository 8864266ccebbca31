//! The round loop: selection, assessment, agent planning, mutual training,
//! aggregation and agent feedback, plus the baseline and ablation modes.

mod config;
mod metrics;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

pub use config::{
    ClientSection, CommSection, DataSection, ExperimentConfig, FlSection, Mode, PpoSection, TierDef, TierSection,
};
pub use metrics::{
    compare_runs, format_sig, read_metrics_csv, summary_csv, summary_text, write_metrics_csv, MetricsRow,
    MetricsWriter, RoundMetrics, RunSeries, RunSummary, CSV_HEADER,
};

use crate::aggregation::{aggregate_round, compute_weights, GlobalModels, ModelGroup};
use crate::client::{assess, local_train, spread, ClientProfile, ClientRoundReport, TierCatalog, TrainSettings};
use crate::data::{dirichlet_partition, gen_blobs, Dataset, PartitionConfig};
use crate::nn::{accuracy, forward, ParamVector};
use crate::rl::{
    allocate_intensity, ppo1_act, ppo1_reward, ppo1_state, ppo2_act, ppo2_reward, ppo2_state, ActMode,
    AllocationAction, AllocationPolicy, IntensityPolicy, PpoAgent, Transition,
};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Output-layer weight scale applied with a non-zero allocation prior, so the
/// prior dominates the initial tier choice.
const PRIOR_WEIGHT_SCALE: f64 = 0.1;

/// `k` distinct clients out of `0..n`, uniformly at random.
pub fn select_clients(n: usize, k: usize, round_seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::config("k", format!("cannot select {k} of {n} clients")));
    }
    Ok(index::sample(&mut seed::rng(round_seed, &[stream::SELECT]), n, k).into_vec())
}

/// Environment, global models and agents of one experiment.
pub struct Simulation {
    cfg: ExperimentConfig,
    catalog: TierCatalog,
    settings: TrainSettings,
    profiles: Vec<ClientProfile>,
    test: Dataset,
    initial: GlobalModels,
    globals: GlobalModels,
    allocator: Option<PpoAgent<AllocationPolicy>>,
    intensity: Option<PpoAgent<IntensityPolicy>>,
    round: usize,
    episode: usize,
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let catalog = cfg.catalog()?;
        let base = cfg.seed;
        let d = &cfg.data;
        let train = gen_blobs(
            d.classes,
            d.dim,
            d.train_per_class,
            d.spread,
            seed::derive(base, &[stream::DATA, 0]),
        )?;
        let test = gen_blobs(
            d.classes,
            d.dim,
            d.test_per_class,
            d.spread,
            seed::derive(base, &[stream::DATA, 1]),
        )?;
        let shards = dirichlet_partition(
            &train,
            &PartitionConfig {
                n_clients: cfg.n_clients,
                alpha: d.alpha,
                seed: seed::derive(base, &[stream::DATA, 2]),
            },
        )?;
        let mut psi_rng = seed::rng(base, &[stream::PROFILE]);
        let profiles = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| {
                let u: f64 = rand::Rng::random(&mut psi_rng);
                let psi = cfg.clients.psi_min * cfg.clients.psi_span.powf(u);
                ClientProfile::new(id, psi, shard, cfg.clients.drift_sigma)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut init_rng = seed::rng(base, &[stream::INIT]);
        let initial = GlobalModels {
            lite: catalog.lite().spec.init_params(&mut init_rng),
            tiers: catalog
                .tiers()
                .iter()
                .map(|t| t.spec.init_params(&mut init_rng))
                .collect(),
        };

        let k = cfg.per_round;
        let allocator = if cfg.mode.uses_allocation_agent() {
            let choices = catalog.delta();
            let mut agent = PpoAgent::new(
                AllocationPolicy { heads: k, choices },
                k,
                &cfg.ppo.actor_hidden,
                &cfg.ppo.critic_hidden,
                cfg.ppo.allocation_config(),
                &mut seed::rng(base, &[stream::PPO1]),
            )?;
            if cfg.ppo.allocation_prior != 0.0 {
                let width = agent.actor_spec().output_dim();
                let bias: Vec<f64> = (0..width)
                    .map(|j| {
                        if j % choices == 0 {
                            cfg.ppo.allocation_prior
                        } else {
                            0.0
                        }
                    })
                    .collect();
                agent.set_output_prior(&bias, PRIOR_WEIGHT_SCALE)?;
            }
            Some(agent)
        } else {
            None
        };
        let intensity = if cfg.mode.uses_intensity_agent() {
            Some(PpoAgent::new(
                IntensityPolicy { k },
                k,
                &cfg.ppo.actor_hidden,
                &cfg.ppo.critic_hidden,
                cfg.ppo.intensity_config(),
                &mut seed::rng(base, &[stream::PPO2]),
            )?)
        } else {
            None
        };

        Ok(Self {
            settings: TrainSettings {
                lr: cfg.fl.lr3,
                local_weights: cfg.local_weights()?,
                lite_weights: cfg.lite_weights()?,
            },
            catalog,
            profiles,
            test,
            globals: initial.clone(),
            initial,
            allocator,
            intensity,
            round: 0,
            episode: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn catalog(&self) -> &TierCatalog {
        &self.catalog
    }

    pub fn profiles(&self) -> &[ClientProfile] {
        &self.profiles
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn globals(&self) -> &GlobalModels {
        &self.globals
    }

    pub fn allocation_agent(&self) -> Option<&PpoAgent<AllocationPolicy>> {
        self.allocator.as_ref()
    }

    pub fn intensity_agent(&self) -> Option<&PpoAgent<IntensityPolicy>> {
        self.intensity.as_ref()
    }

    pub fn allocation_agent_mut(&mut self) -> Option<&mut PpoAgent<AllocationPolicy>> {
        self.allocator.as_mut()
    }

    pub fn intensity_agent_mut(&mut self) -> Option<&mut PpoAgent<IntensityPolicy>> {
        self.intensity.as_mut()
    }

    /// Rounds completed so far, across episodes.
    pub fn rounds_done(&self) -> usize {
        self.round
    }

    /// Starts a new episode: global models and client speeds return to their
    /// initial values, agents keep what they learned.
    pub fn reset_episode(&mut self) {
        self.globals = self.initial.clone();
        self.profiles.iter_mut().for_each(ClientProfile::reset);
        self.episode += 1;
    }

    fn test_accuracy(&self, params: &ParamVector, spec: &crate::nn::NetworkSpec) -> Result<f64> {
        let logits = forward(params, spec, self.test.inputs().view())?;
        Ok(accuracy(&logits, self.test.labels()))
    }

    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let g = self.round as u64 + 1;
        let base = self.cfg.seed;
        let k = self.cfg.per_round;
        let total = self.cfg.total_intensity();

        let selected = select_clients(self.cfg.n_clients, k, seed::derive(base, &[stream::SELECT, g]))?;
        let mut drift_rng = seed::rng(base, &[stream::DRIFT, g]);
        self.profiles.iter_mut().for_each(|p| p.drift(&mut drift_rng));

        let lite = self.catalog.lite();
        let assessments = selected
            .par_iter()
            .map(|&c| {
                let s = seed::derive(base, &[stream::ASSESS, g, c as u64]);
                assess(&self.profiles[c], lite, &self.globals.lite, self.settings.lr, s)
            })
            .collect::<Result<Vec<_>>>()?;
        let assess_times: Vec<f64> = assessments.iter().map(|a| a.time).collect();
        let norm_assess = ppo1_state(&assess_times)?;

        let (allocation, alloc_step) = match &self.allocator {
            Some(agent) => {
                let mut rng = seed::rng(base, &[stream::PPO1, g]);
                let (action, log_prob, value) = ppo1_act(agent, &norm_assess, ActMode::Sample, &mut rng)?;
                (action.clone(), Some((action, log_prob, value)))
            }
            None => (AllocationAction { tiers: vec![1; k] }, None),
        };
        allocation.validate(&self.catalog)?;

        let intensity_state = ppo2_state(&norm_assess, &allocation, &self.catalog)?;
        let (tau, intensity_step) = match &self.intensity {
            Some(agent) => {
                let mut rng = seed::rng(base, &[stream::PPO2, g]);
                let (action, log_prob, value) = ppo2_act(agent, &intensity_state, total, ActMode::Sample, &mut rng)?;
                (action.tau.clone(), Some((action, log_prob, value)))
            }
            None => (allocate_intensity(&vec![1.0 / k as f64; k], total)?, None),
        };
        if tau.iter().sum::<usize>() != total || tau.contains(&0) {
            return Err(Error::Contract(format!(
                "epoch allocation {tau:?} violates the round budget {total}"
            )));
        }

        let reports = selected
            .par_iter()
            .zip(assessments)
            .zip(allocation.tiers.par_iter().zip(tau.par_iter()))
            .map(|((&c, assessment), (&tier_id, &epochs))| {
                let tier = self.catalog.tier(tier_id)?;
                let s = seed::derive(base, &[stream::LOCAL, g, c as u64]);
                local_train(
                    &self.profiles[c],
                    assessment,
                    self.globals.tier(tier_id)?,
                    lite,
                    tier,
                    epochs,
                    &self.settings,
                    s,
                    &self.test,
                )
            })
            .collect::<Result<Vec<ClientRoundReport>>>()?;

        let entropies: Vec<f64> = reports.iter().map(|r| r.entropy).collect();
        let accs: Vec<f64> = reports.iter().map(|r| r.acc).collect();
        let lite_weights = compute_weights(&entropies, &accs)?;
        let mut groups = Vec::new();
        for tier in self.catalog.tiers() {
            let members: Vec<&ClientRoundReport> = reports.iter().filter(|r| r.tier_id == tier.tier_id).collect();
            if members.is_empty() {
                continue;
            }
            let h: Vec<f64> = members.iter().map(|r| r.entropy).collect();
            let a: Vec<f64> = members.iter().map(|r| r.acc).collect();
            let weights = compute_weights(&h, &a)?;
            let group = ModelGroup {
                tier_id: tier.tier_id,
                members: members.iter().map(|r| (r.client_id, r.local_params.clone())).collect(),
            };
            groups.push((group, weights));
        }
        let lite_members: Vec<ParamVector> = reports.iter().map(|r| r.lite_params.clone()).collect();
        self.globals = aggregate_round(
            &self.globals,
            &lite_members,
            &lite_weights,
            &groups,
            self.cfg.aggregation_form,
        )?;

        let local_times: Vec<f64> = reports.iter().map(|r| r.local_time).collect();
        let compute_times: Vec<f64> = reports.iter().map(|r| r.compute_time()).collect();
        let r1 = ppo1_reward(&local_times, &tau, self.cfg.max_difference)?;
        let r2 = ppo2_reward(&local_times)?;

        if let (Some(agent), Some((action, log_prob, value))) = (self.allocator.as_mut(), alloc_step) {
            agent.record(Transition {
                state: norm_assess.clone(),
                action,
                log_prob,
                reward: r1,
                value_estimate: value,
            })?;
        }
        if let (Some(agent), Some((action, log_prob, value))) = (self.intensity.as_mut(), intensity_step) {
            agent.record(Transition {
                state: intensity_state,
                action,
                log_prob,
                reward: r2,
                value_estimate: value,
            })?;
        }

        let acc_lite = self.test_accuracy(&self.globals.lite, &self.catalog.lite().spec)?;
        let acc_tiers = self
            .catalog
            .tiers()
            .iter()
            .zip(&self.globals.tiers)
            .map(|(t, p)| self.test_accuracy(p, &t.spec))
            .collect::<Result<Vec<_>>>()?;

        self.round += 1;
        let slowest = compute_times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(RoundMetrics {
            round: self.round,
            episode: self.episode,
            selected,
            tiers: allocation.tiers,
            tau,
            delta_tc: spread(&compute_times)?,
            delta_tl: spread(&local_times)?,
            assess_times,
            local_times,
            compute_times,
            total_time: slowest + self.cfg.comm.total(),
            r1,
            r2,
            acc_lite,
            acc_tiers,
            weights: lite_weights.weights,
        })
    }

    /// Writes `allocation.ckpt` and `intensity.ckpt` for the agents this mode uses.
    pub fn write_checkpoints(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let (k, delta) = (self.cfg.per_round, self.catalog.delta());
        if let Some(agent) = &self.allocator {
            agent.write_checkpoint(BufWriter::new(File::create(dir.join("allocation.ckpt"))?), k, delta)?;
        }
        if let Some(agent) = &self.intensity {
            agent.write_checkpoint(BufWriter::new(File::create(dir.join("intensity.ckpt"))?), k, delta)?;
        }
        Ok(())
    }
}

/// Runs every episode, handing each round to `on_round` as it completes and
/// the simulation to `on_episode_end` after each episode.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut on_round: impl FnMut(&RoundMetrics) -> Result<()>,
    mut on_episode_end: impl FnMut(usize, &Simulation) -> Result<()>,
) -> Result<Vec<RoundMetrics>> {
    let mut sim = Simulation::new(cfg.clone())?;
    let mut all = Vec::with_capacity(cfg.rounds * cfg.episodes);
    for episode in 0..cfg.episodes {
        if episode > 0 {
            sim.reset_episode();
        }
        for _ in 0..cfg.rounds {
            let m = sim.run_round()?;
            on_round(&m)?;
            all.push(m);
        }
        on_episode_end(episode, &sim)?;
    }
    Ok(all)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundMetrics>> {
    run_experiment_with(cfg, |_| Ok(()), |_, _| Ok(()))
}
