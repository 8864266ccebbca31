use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationForm;
use crate::client::{ModelTier, TierCatalog};
use crate::nn::{Activation, LossWeights, NetworkSpec};
use crate::rl::{ActorLayout, PpoConfig};
use crate::{Error, Result};

/// Which decisions the agents make in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Both agents act.
    #[default]
    Hapfl,
    /// Every client trains the first tier with an equal share of epochs.
    FedavgUniform,
    /// First tier for everyone; the intensity agent splits epochs.
    FixedModel,
    /// The allocation agent picks tiers; epochs are split evenly.
    FixedIntensity,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Hapfl, Mode::FedavgUniform, Mode::FixedModel, Mode::FixedIntensity];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hapfl => "hapfl",
            Mode::FedavgUniform => "fedavg_uniform",
            Mode::FixedModel => "fixed_model",
            Mode::FixedIntensity => "fixed_intensity",
        }
    }

    pub fn uses_allocation_agent(self) -> bool {
        matches!(self, Mode::Hapfl | Mode::FixedIntensity)
    }

    pub fn uses_intensity_agent(self) -> bool {
        matches!(self, Mode::Hapfl | Mode::FixedModel)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
            Error::config("mode", format!("unknown mode {s:?}; valid modes: {}", valid.join(", ")))
        })
    }
}

/// Client-side training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlSection {
    /// SGD step size for both client models.
    pub lr3: f64,
    /// Local model: supervised weight.
    pub lambda1: f64,
    /// Local model: distillation weight.
    pub lambda2: f64,
    /// LiteModel: supervised weight.
    pub lambda3: f64,
    /// LiteModel: distillation weight.
    pub lambda4: f64,
}

impl Default for FlSection {
    fn default() -> Self {
        Self {
            lr3: 0.0003,
            lambda1: 0.4,
            lambda2: 0.6,
            lambda3: 0.5,
            lambda4: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoSection {
    pub epsilon: f64,
    pub gamma: f64,
    /// Allocation agent learning rate.
    pub lr1: f64,
    /// Intensity agent learning rate.
    pub lr2: f64,
    /// Critic learning rate for both agents; each agent's own rate if unset.
    pub critic_lr: Option<f64>,
    /// Initial logit advantage of the first (cheapest) tier in the
    /// allocation actor; zero starts from a uniform tier choice.
    pub allocation_prior: f64,
    #[serde(rename = "B")]
    pub buffer: usize,
    pub update_epochs: usize,
    pub actor_layout: ActorLayout,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for PpoSection {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            gamma: 0.0,
            lr1: 0.0003,
            lr2: 0.001,
            critic_lr: None,
            allocation_prior: 4.0,
            buffer: 5,
            update_epochs: 4,
            actor_layout: ActorLayout::Shared,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
        }
    }
}

impl PpoSection {
    fn agent_config(&self, lr: f64) -> PpoConfig {
        PpoConfig {
            clip_eps: self.epsilon,
            gamma: self.gamma,
            actor_lr: lr,
            critic_lr: self.critic_lr.unwrap_or(lr),
            update_epochs: self.update_epochs,
            buffer_capacity: self.buffer,
            actor_layout: self.actor_layout,
        }
    }

    pub fn allocation_config(&self) -> PpoConfig {
        self.agent_config(self.lr1)
    }

    pub fn intensity_config(&self) -> PpoConfig {
        self.agent_config(self.lr2)
    }
}

/// Synthetic blobs, split across clients by a Dirichlet partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    pub alpha: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 16,
            train_per_class: 100,
            test_per_class: 50,
            spread: 0.3,
            alpha: 0.4,
        }
    }
}

/// Client speed factors are drawn log-uniformly from `[psi_min, psi_min * psi_span]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientSection {
    pub psi_min: f64,
    pub psi_span: f64,
    pub drift_sigma: f64,
}

impl Default for ClientSection {
    fn default() -> Self {
        Self {
            psi_min: 0.01,
            psi_span: 10.0,
            drift_sigma: 0.02,
        }
    }
}

/// Fixed per-round communication times, added to the round's wall time only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommSection {
    pub broadcast: f64,
    pub upload: f64,
    pub aggregate: f64,
}

impl CommSection {
    pub fn total(&self) -> f64 {
        self.broadcast + self.upload + self.aggregate
    }
}

/// Hidden layers and relative per-epoch cost of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierDef {
    pub name: String,
    pub hidden: Vec<usize>,
    pub cost: f64,
}

impl TierDef {
    pub fn new(name: &str, hidden: &[usize], cost: f64) -> Self {
        Self {
            name: name.into(),
            hidden: hidden.to_vec(),
            cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TierSection {
    pub lite: TierDef,
    pub local: Vec<TierDef>,
    pub min_params: usize,
}

impl Default for TierSection {
    fn default() -> Self {
        Self {
            lite: TierDef::new("lite", &[8], 1.0),
            local: vec![TierDef::new("small", &[16], 2.0), TierDef::new("large", &[64], 8.0)],
            min_params: 100,
        }
    }
}

impl TierSection {
    /// Small, medium and large local tiers.
    pub fn three_tiers() -> Self {
        Self {
            local: vec![
                TierDef::new("small", &[16], 2.0),
                TierDef::new("medium", &[32], 4.0),
                TierDef::new("large", &[64], 8.0),
            ],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Client population.
    #[serde(rename = "K")]
    pub n_clients: usize,
    /// Clients selected per round.
    #[serde(rename = "k")]
    pub per_round: usize,
    pub rounds: usize,
    pub episodes: usize,
    pub seed: u64,
    pub mode: Mode,
    pub aggregation_form: AggregationForm,
    /// Default local epochs; the round budget defaults to `k * E`.
    #[serde(rename = "E")]
    pub local_epochs: usize,
    /// Total epochs per round shared by the selected clients.
    pub total_intensity: Option<usize>,
    /// Largest acceptable ratio between per-epoch client times.
    #[serde(rename = "MD")]
    pub max_difference: f64,
    pub fl: FlSection,
    pub ppo: PpoSection,
    pub data: DataSection,
    pub clients: ClientSection,
    pub comm: CommSection,
    pub tiers: TierSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_clients: 10,
            per_round: 6,
            rounds: 200,
            episodes: 1,
            seed: 0,
            mode: Mode::Hapfl,
            aggregation_form: AggregationForm::Delta,
            local_epochs: 20,
            total_intensity: None,
            max_difference: 10.0,
            fl: FlSection::default(),
            ppo: PpoSection::default(),
            data: DataSection::default(),
            clients: ClientSection::default(),
            comm: CommSection::default(),
            tiers: TierSection::default(),
        }
    }
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {value}")))
    }
}

impl ExperimentConfig {
    /// Twenty clients, three local tiers and a 20x speed spread.
    pub fn scalability() -> Self {
        Self {
            n_clients: 20,
            per_round: 12,
            clients: ClientSection {
                psi_span: 20.0,
                ..ClientSection::default()
            },
            tiers: TierSection::three_tiers(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_intensity(&self) -> usize {
        self.total_intensity.unwrap_or(self.per_round * self.local_epochs)
    }

    pub fn local_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.fl.lambda1, self.fl.lambda2)
            .map_err(|_| Error::config("fl.lambda1", "lambda1 + lambda2 must equal 1 with both non-negative"))
    }

    pub fn lite_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.fl.lambda3, self.fl.lambda4)
            .map_err(|_| Error::config("fl.lambda3", "lambda3 + lambda4 must equal 1 with both non-negative"))
    }

    fn tier_spec(&self, key: &str, def: &TierDef) -> Result<NetworkSpec> {
        let mut sizes = vec![self.data.dim];
        sizes.extend_from_slice(&def.hidden);
        sizes.push(self.data.classes);
        NetworkSpec::new(sizes, Activation::Relu).map_err(|e| Error::config(key, e.to_string()))
    }

    pub fn catalog(&self) -> Result<TierCatalog> {
        let lite = ModelTier {
            tier_id: 0,
            name: self.tiers.lite.name.clone(),
            spec: self.tier_spec("tiers.lite", &self.tiers.lite)?,
            cost_ratio: self.tiers.lite.cost,
        };
        let local = self
            .tiers
            .local
            .iter()
            .enumerate()
            .map(|(i, def)| {
                Ok(ModelTier {
                    tier_id: i + 1,
                    name: def.name.clone(),
                    spec: self.tier_spec("tiers.local", def)?,
                    cost_ratio: def.cost,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TierCatalog::new(lite, local, self.tiers.min_params).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("tiers", other.to_string()),
        })
    }

    /// Checks every cross-field constraint; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.n_clients < 2 {
            return Err(Error::config("K", "need at least 2 clients"));
        }
        if self.per_round < 2 || self.per_round > self.n_clients {
            return Err(Error::config(
                "k",
                format!("must lie in [2, K = {}], got {}", self.n_clients, self.per_round),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("E", "must be at least 1"));
        }
        if self.total_intensity() < self.per_round {
            return Err(Error::config(
                "total_intensity",
                format!("budget {} is below k = {}", self.total_intensity(), self.per_round),
            ));
        }
        positive("MD", self.max_difference)?;
        positive("fl.lr3", self.fl.lr3)?;
        self.local_weights()?;
        self.lite_weights()?;
        positive("ppo.lr1", self.ppo.lr1)?;
        positive("ppo.lr2", self.ppo.lr2)?;
        if !self.ppo.allocation_prior.is_finite() {
            return Err(Error::config("ppo.allocation_prior", "must be finite"));
        }
        if let Some(lr) = self.ppo.critic_lr {
            positive("ppo.critic_lr", lr)?;
        }
        if !(self.ppo.epsilon > 0.0 && self.ppo.epsilon < 1.0) {
            return Err(Error::config("ppo.epsilon", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.ppo.gamma) {
            return Err(Error::config("ppo.gamma", "must lie in [0, 1]"));
        }
        if self.ppo.buffer == 0 {
            return Err(Error::config("ppo.B", "must be at least 1"));
        }
        if self.ppo.update_epochs == 0 {
            return Err(Error::config("ppo.update_epochs", "must be at least 1"));
        }
        if self.data.classes < 2 {
            return Err(Error::config("data.classes", "need at least 2 classes"));
        }
        if self.data.dim < 2 {
            return Err(Error::config("data.dim", "need at least 2 features"));
        }
        if self.data.train_per_class * self.data.classes < self.n_clients {
            return Err(Error::config(
                "data.train_per_class",
                "fewer training samples than clients",
            ));
        }
        if self.data.test_per_class == 0 {
            return Err(Error::config("data.test_per_class", "must be at least 1"));
        }
        positive("data.spread", self.data.spread)?;
        positive("data.alpha", self.data.alpha)?;
        positive("clients.psi_min", self.clients.psi_min)?;
        if !(self.clients.psi_span >= 1.0 && self.clients.psi_span.is_finite()) {
            return Err(Error::config("clients.psi_span", "must be at least 1"));
        }
        if !(self.clients.drift_sigma >= 0.0 && self.clients.drift_sigma.is_finite()) {
            return Err(Error::config("clients.drift_sigma", "must be non-negative"));
        }
        for (key, v) in [
            ("comm.broadcast", self.comm.broadcast),
            ("comm.upload", self.comm.upload),
            ("comm.aggregate", self.comm.aggregate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be non-negative"));
            }
        }
        if self.tiers.local.is_empty() {
            return Err(Error::config("tiers.local", "need at least one local tier"));
        }
        self.catalog()?;
        Ok(())
    }
}
