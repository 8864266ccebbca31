//! Clipped-surrogate PPO with a separate critic network.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{discounted_returns, ReplayBuffer, Transition};
use crate::nn::{
    adam_step, forward, gradient, read_params, write_params, Activation, AdamState, Matrix, NetworkSpec, ParamVector,
};
use crate::{Error, Result};

/// Log-ratio clamp keeping `exp` finite when a policy moves a long way.
const MAX_LOG_RATIO: f64 = 20.0;

/// Features per state entry seen by a [`ActorLayout::Shared`] actor.
pub const SHARED_FEATURES: usize = 3;

/// Action distribution parameterised by the actor's output logits.
pub trait Policy {
    type Action: Clone;

    fn output_dim(&self) -> usize;

    /// Number of independent heads; logits are laid out head after head.
    fn heads(&self) -> usize {
        1
    }

    fn log_prob(&self, logits: &[f64], action: &Self::Action) -> f64;

    /// Gradient of [`Policy::log_prob`] with respect to `logits`.
    fn grad_log_prob(&self, logits: &[f64], action: &Self::Action) -> Vec<f64>;
}

/// How the actor network reads a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorLayout {
    /// One network over the whole state emits every logit.
    #[default]
    Joint,
    /// One network, applied to each state entry, emits that entry's head.
    /// Requires one head per state entry.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub update_epochs: usize,
    pub buffer_capacity: usize,
    #[serde(default)]
    pub actor_layout: ActorLayout,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.9,
            actor_lr: 0.0003,
            critic_lr: 0.0003,
            update_epochs: 4,
            buffer_capacity: 5,
            actor_layout: ActorLayout::Joint,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps >= 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config("clip_eps", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::config("lr", "learning rates must be positive"));
        }
        if self.update_epochs == 0 {
            return Err(Error::config("update_epochs", "must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_return: f64,
}

/// An actor-critic agent with its on-policy transition window.
#[derive(Debug, Clone)]
pub struct PpoAgent<P: Policy> {
    policy: P,
    config: PpoConfig,
    actor_spec: NetworkSpec,
    critic_spec: NetworkSpec,
    actor: ParamVector,
    critic: ParamVector,
    actor_opt: AdamState,
    critic_opt: AdamState,
    buffer: ReplayBuffer<P::Action>,
    reward_scale: f64,
    updates: usize,
    state_dim: usize,
}

impl<P: Policy> PpoAgent<P> {
    /// Builds tanh actor and critic networks with the given hidden layers.
    pub fn new<R: Rng + ?Sized>(
        policy: P,
        state_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        config: PpoConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let layers = |input: usize, hidden: &[usize], out: usize| {
            let mut sizes = vec![input];
            sizes.extend_from_slice(hidden);
            sizes.push(out);
            sizes
        };
        let actor_sizes = match config.actor_layout {
            ActorLayout::Joint => layers(state_dim, actor_hidden, policy.output_dim()),
            ActorLayout::Shared => {
                if policy.heads() != state_dim || !policy.output_dim().is_multiple_of(state_dim) {
                    return Err(Error::config(
                        "actor_layout",
                        "a shared actor needs one head per state entry",
                    ));
                }
                layers(SHARED_FEATURES, actor_hidden, policy.output_dim() / state_dim)
            }
        };
        let actor_spec = NetworkSpec::new(actor_sizes, Activation::Tanh)?;
        let critic_spec = NetworkSpec::new(layers(state_dim, critic_hidden, 1), Activation::Tanh)?;
        let actor = actor_spec.init_params(rng);
        let critic = critic_spec.init_params(rng);
        Ok(Self {
            actor_opt: AdamState::new(actor.len()),
            critic_opt: AdamState::new(critic.len()),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            policy,
            config,
            actor_spec,
            critic_spec,
            actor,
            critic,
            reward_scale: 0.0,
            updates: 0,
            state_dim,
        })
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn actor_params(&self) -> &ParamVector {
        &self.actor
    }

    pub fn actor_params_mut(&mut self) -> &mut ParamVector {
        &mut self.actor
    }

    pub fn critic_params(&self) -> &ParamVector {
        &self.critic
    }

    pub fn actor_spec(&self) -> &NetworkSpec {
        &self.actor_spec
    }

    pub fn critic_spec(&self) -> &NetworkSpec {
        &self.critic_spec
    }

    pub fn buffer(&self) -> &ReplayBuffer<P::Action> {
        &self.buffer
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Scales the actor's output weights and overwrites its output biases.
    /// `bias` has one entry per output unit of the actor network; with a
    /// shared actor that is one head's width.
    pub fn set_output_prior(&mut self, bias: &[f64], weight_scale: f64) -> Result<()> {
        let (w_start, b_start, _, m) = *self.actor_spec.layout().last().expect("at least one layer");
        if bias.len() != m {
            return Err(Error::dim("output prior", m, bias.len()));
        }
        if !weight_scale.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("output prior", "values must be finite"));
        }
        let values = self.actor.values_mut();
        values[w_start..b_start].iter_mut().for_each(|w| *w *= weight_scale);
        values[b_start..b_start + m].copy_from_slice(bias);
        Ok(())
    }

    /// Network input for a state: states are positive time ratios, so the
    /// networks see their logarithms.
    fn features(states: &[&[f64]]) -> Matrix {
        let dim = states.first().map_or(0, |s| s.len());
        Array2::from_shape_fn((states.len(), dim), |(i, j)| states[i][j].max(1e-12).ln())
    }

    /// Rows of actor input per state.
    fn actor_rows(&self) -> usize {
        match self.config.actor_layout {
            ActorLayout::Joint => 1,
            ActorLayout::Shared => self.state_dim,
        }
    }

    /// One row per state entry: its log value relative to the smallest,
    /// the mean and the largest log value of the state.
    fn shared_features(states: &[&[f64]]) -> Matrix {
        let dim = states.first().map_or(0, |s| s.len());
        let mut out = Matrix::zeros((states.len() * dim, SHARED_FEATURES));
        for (i, state) in states.iter().enumerate() {
            let logs: Vec<f64> = state.iter().map(|s| s.max(1e-12).ln()).collect();
            let min = logs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = logs.iter().sum::<f64>() / dim as f64;
            for (j, l) in logs.iter().enumerate() {
                let mut row = out.row_mut(i * dim + j);
                row[0] = l - min;
                row[1] = l - mean;
                row[2] = max - l;
            }
        }
        out
    }

    fn actor_inputs(&self, states: &[&[f64]]) -> Matrix {
        match self.config.actor_layout {
            ActorLayout::Joint => Self::features(states),
            ActorLayout::Shared => Self::shared_features(states),
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim() {
            return Err(Error::dim("state", self.state_dim(), state.len()));
        }
        if state.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Contract("states must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn actor_logits(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let out = forward(&self.actor, &self.actor_spec, self.actor_inputs(&[state]).view())?;
        Ok(out.iter().copied().collect())
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        let out = forward(&self.critic, &self.critic_spec, Self::features(&[state]).view())?;
        Ok(out[[0, 0]])
    }

    /// Stores a transition and runs [`PpoAgent::update`] once the window is full.
    pub fn record(&mut self, transition: Transition<P::Action>) -> Result<Option<UpdateStats>> {
        self.check_state(&transition.state)?;
        if !transition.log_prob.is_finite() {
            return Err(Error::Contract("transition log-probability must be finite".into()));
        }
        self.reward_scale = self.reward_scale.max(transition.reward.abs());
        self.buffer.push(transition);
        if self.buffer.is_full() {
            self.update().map(Some)
        } else {
            Ok(None)
        }
    }

    /// Runs `update_epochs` clipped-surrogate passes over the full window and
    /// empties it.
    pub fn update(&mut self) -> Result<UpdateStats> {
        if !self.buffer.is_full() {
            return Err(Error::Contract(format!(
                "update needs a full buffer ({} of {})",
                self.buffer.len(),
                self.buffer.capacity()
            )));
        }
        let transitions: Vec<&Transition<P::Action>> = self.buffer.iter().collect();
        let n = transitions.len();
        let scale = if self.reward_scale > 0.0 {
            self.reward_scale
        } else {
            1.0
        };
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward / scale).collect();
        let returns = discounted_returns(&rewards, self.config.gamma);
        let mut advantages: Vec<f64> = returns
            .iter()
            .zip(&transitions)
            .map(|(g, t)| g - t.value_estimate)
            .collect();
        if n >= 2 {
            let mean = advantages.iter().sum::<f64>() / n as f64;
            let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            for a in &mut advantages {
                *a -= mean;
                if std > 1e-8 {
                    *a /= std;
                }
            }
        }
        let states: Vec<&[f64]> = transitions.iter().map(|t| t.state.as_slice()).collect();
        let inputs = Self::features(&states);
        let actor_inputs = self.actor_inputs(&states);
        let rows = self.actor_rows();
        let actions: Vec<P::Action> = transitions.iter().map(|t| t.action.clone()).collect();
        let old_log_probs: Vec<f64> = transitions.iter().map(|t| t.log_prob).collect();

        let (lo, hi) = (1.0 - self.config.clip_eps, 1.0 + self.config.clip_eps);
        let mut stats = UpdateStats {
            actor_loss: 0.0,
            critic_loss: 0.0,
            mean_return: returns.iter().sum::<f64>() / n as f64,
        };
        for _ in 0..self.config.update_epochs {
            let policy = &self.policy;
            let (actor_loss, actor_grad) = gradient(&self.actor, &self.actor_spec, actor_inputs.view(), |logits| {
                let mut grad = Matrix::zeros(logits.dim());
                let width = logits.ncols();
                let mut objective = 0.0;
                for i in 0..n {
                    let row: Vec<f64> = logits
                        .rows()
                        .into_iter()
                        .skip(i * rows)
                        .take(rows)
                        .flatten()
                        .copied()
                        .collect();
                    let lp = policy.log_prob(&row, &actions[i]);
                    let ratio = (lp - old_log_probs[i]).clamp(-MAX_LOG_RATIO, MAX_LOG_RATIO).exp();
                    let adv = advantages[i];
                    let unclipped = ratio * adv;
                    let clipped = ratio.clamp(lo, hi) * adv;
                    objective += unclipped.min(clipped);
                    if unclipped <= clipped && adv != 0.0 {
                        let g = policy.grad_log_prob(&row, &actions[i]);
                        for (j, gj) in g.into_iter().enumerate() {
                            grad[[i * rows + j / width, j % width]] = -adv * ratio * gj / n as f64;
                        }
                    }
                }
                Ok((-objective / n as f64, grad))
            })?;
            adam_step(&mut self.actor_opt, &mut self.actor, &actor_grad, self.config.actor_lr)?;

            let (critic_loss, critic_grad) = gradient(&self.critic, &self.critic_spec, inputs.view(), |values| {
                let mut grad = Matrix::zeros(values.dim());
                let mut loss = 0.0;
                for i in 0..n {
                    let diff = values[[i, 0]] - returns[i];
                    loss += diff * diff;
                    grad[[i, 0]] = 2.0 * diff / n as f64;
                }
                Ok((loss / n as f64, grad))
            })?;
            adam_step(
                &mut self.critic_opt,
                &mut self.critic,
                &critic_grad,
                self.config.critic_lr,
            )?;
            stats.actor_loss = actor_loss;
            stats.critic_loss = critic_loss;
        }
        if !(self.actor.is_finite() && self.critic.is_finite()) {
            return Err(Error::NonFinite {
                layer: self.actor_spec.n_layers(),
            });
        }
        self.buffer.clear();
        self.updates += 1;
        Ok(stats)
    }

    /// Checkpoint: `u32 LE` header length, JSON header, actor then critic
    /// parameters in the [`write_params`] format.
    pub fn write_checkpoint<W: Write>(&self, mut writer: W, k: usize, delta: usize) -> Result<()> {
        let header = AgentHeader {
            clip_eps: self.config.clip_eps,
            gamma: self.config.gamma,
            actor_lr: self.config.actor_lr,
            critic_lr: self.config.critic_lr,
            k,
            delta,
            actor_layout: self.config.actor_layout,
            actor_spec: self.actor_spec.clone(),
            critic_spec: self.critic_spec.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        writer.write_all(&(json.len() as u32).to_le_bytes())?;
        writer.write_all(&json)?;
        write_params(&mut writer, &self.actor)?;
        write_params(&mut writer, &self.critic)?;
        Ok(())
    }

    /// Restores network weights from a checkpoint written by an agent with
    /// identical architecture. Optimizer moments restart from zero.
    pub fn load_checkpoint<R: Read>(&mut self, reader: R) -> Result<AgentHeader> {
        let (header, actor, critic) = read_checkpoint(reader)?;
        if header.actor_spec != self.actor_spec || header.critic_spec != self.critic_spec {
            return Err(Error::Contract("checkpoint architecture does not match agent".into()));
        }
        self.actor_spec.check_params(&actor)?;
        self.critic_spec.check_params(&critic)?;
        self.actor = actor;
        self.critic = critic;
        self.actor_opt = AdamState::new(self.actor.len());
        self.critic_opt = AdamState::new(self.critic.len());
        Ok(header)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentHeader {
    pub clip_eps: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub k: usize,
    pub delta: usize,
    #[serde(default)]
    pub actor_layout: ActorLayout,
    pub actor_spec: NetworkSpec,
    pub critic_spec: NetworkSpec,
}

pub fn read_checkpoint<R: Read>(mut reader: R) -> Result<(AgentHeader, ParamVector, ParamVector)> {
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    reader.read_exact(&mut json)?;
    let header: AgentHeader = serde_json::from_slice(&json)?;
    let actor = read_params(&mut reader)?;
    let critic = read_params(&mut reader)?;
    Ok((header, actor, critic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::log_softmax;
    use crate::seed;

    /// Single categorical head over `n` choices; actions are indices.
    struct Categorical(usize);

    impl Policy for Categorical {
        type Action = usize;
        fn output_dim(&self) -> usize {
            self.0
        }
        fn log_prob(&self, logits: &[f64], a: &usize) -> f64 {
            log_softmax(logits)[*a]
        }
        fn grad_log_prob(&self, logits: &[f64], a: &usize) -> Vec<f64> {
            let lp = log_softmax(logits);
            lp.iter()
                .enumerate()
                .map(|(j, l)| f64::from(j == *a) - l.exp())
                .collect()
        }
    }

    fn agent(capacity: usize, clip: f64) -> PpoAgent<Categorical> {
        let cfg = PpoConfig {
            clip_eps: clip,
            gamma: 0.9,
            actor_lr: 0.01,
            critic_lr: 0.01,
            update_epochs: 4,
            buffer_capacity: capacity,
            actor_layout: ActorLayout::Joint,
        };
        PpoAgent::new(Categorical(3), 2, &[8], &[8], cfg, &mut seed::rng(4, &[])).unwrap()
    }

    fn transition(
        agent: &PpoAgent<Categorical>,
        state: Vec<f64>,
        action: usize,
        reward: f64,
        value: f64,
    ) -> Transition<usize> {
        let logits = agent.actor_logits(&state).unwrap();
        Transition {
            log_prob: agent.policy().log_prob(&logits, &action),
            state,
            action,
            reward,
            value_estimate: value,
        }
    }

    #[test]
    fn update_requires_full_buffer() {
        let mut a = agent(3, 0.2);
        let t = transition(&a, vec![1.0, 2.0], 0, 1.0, 0.0);
        assert!(a.record(t).unwrap().is_none());
        assert!(matches!(a.update(), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_advantage_leaves_actor_untouched() {
        let mut a = agent(2, 0.2);
        let before = a.actor_params().clone();
        let critic_before = a.critic_params().clone();
        // reward/scale = 1 for both; returns [1.9, 1.0]; values chosen equal to returns
        let s = vec![1.5, 2.0];
        let t1 = transition(&a, s.clone(), 1, 1.0, 1.9);
        let t2 = transition(&a, s, 2, 1.0, 1.0);
        a.record(t1).unwrap();
        assert!(a.record(t2).unwrap().is_some());
        assert_eq!(a.actor_params(), &before);
        assert_ne!(a.critic_params(), &critic_before);
        assert!(a.buffer().is_empty());
    }

    #[test]
    fn positive_advantage_raises_action_probability() {
        let mut a = agent(1, 0.2);
        let s = vec![2.0, 3.0];
        let before = a.policy().log_prob(&a.actor_logits(&s).unwrap(), &2);
        let t = transition(&a, s.clone(), 2, 1.0, 0.0);
        a.record(t).unwrap();
        let after = a.policy().log_prob(&a.actor_logits(&s).unwrap(), &2);
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn critic_loss_decreases_for_one_transition() {
        let mut a = agent(1, 0.2);
        let s = vec![1.2, 4.0];
        let loss = |a: &PpoAgent<Categorical>| (a.value(&s).unwrap() - 1.0).powi(2);
        let before = loss(&a);
        let t = transition(&a, s.clone(), 0, 1.0, a.value(&s).unwrap());
        a.record(t).unwrap();
        assert!(loss(&a) <= before);
    }

    #[test]
    fn zero_clip_matches_unclipped_on_first_pass() {
        // With ratio == 1 the clipped and unclipped objectives coincide, so one
        // epoch of clipped PPO equals one epoch of vanilla policy gradient.
        let run = |clip: f64| {
            let mut a = agent(1, clip);
            a.config.update_epochs = 1;
            let s = vec![2.0, 1.0];
            let t = transition(&a, s, 1, 1.0, 0.0);
            a.record(t).unwrap();
            a.actor_params().clone()
        };
        assert_eq!(run(0.0), run(0.5));
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = agent(2, 0.2);
        let mut buf = Vec::new();
        a.write_checkpoint(&mut buf, 2, 3).unwrap();
        let (header, actor, critic) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(header.k, 2);
        assert_eq!(header.delta, 3);
        assert_eq!(header.clip_eps, 0.2);
        assert_eq!(&actor, a.actor_params());
        assert_eq!(&critic, a.critic_params());
        let mut b = agent(2, 0.2);
        b.actor_params_mut().values_mut()[0] += 1.0;
        b.load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(b.actor_params(), a.actor_params());
    }

    /// Independent categorical heads of `width` choices, one per state entry.
    struct PerEntry {
        heads: usize,
        width: usize,
    }

    impl Policy for PerEntry {
        type Action = Vec<usize>;
        fn output_dim(&self) -> usize {
            self.heads * self.width
        }
        fn heads(&self) -> usize {
            self.heads
        }
        fn log_prob(&self, logits: &[f64], a: &Vec<usize>) -> f64 {
            logits.chunks(self.width).zip(a).map(|(l, &i)| log_softmax(l)[i]).sum()
        }
        fn grad_log_prob(&self, logits: &[f64], a: &Vec<usize>) -> Vec<f64> {
            logits
                .chunks(self.width)
                .zip(a)
                .flat_map(|(l, &i)| {
                    log_softmax(l)
                        .into_iter()
                        .enumerate()
                        .map(move |(j, lp)| f64::from(j == i) - lp.exp())
                })
                .collect()
        }
    }

    fn shared_agent(heads: usize, capacity: usize) -> PpoAgent<PerEntry> {
        let cfg = PpoConfig {
            buffer_capacity: capacity,
            actor_lr: 0.01,
            actor_layout: ActorLayout::Shared,
            ..PpoConfig::default()
        };
        PpoAgent::new(
            PerEntry { heads, width: 2 },
            heads,
            &[8],
            &[8],
            cfg,
            &mut seed::rng(9, &[]),
        )
        .unwrap()
    }

    #[test]
    fn shared_layout_needs_one_head_per_entry() {
        let cfg = PpoConfig {
            actor_layout: ActorLayout::Shared,
            ..PpoConfig::default()
        };
        let err = PpoAgent::new(Categorical(4), 2, &[8], &[8], cfg, &mut seed::rng(1, &[]));
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn shared_actor_is_permutation_equivariant() {
        let a = shared_agent(3, 2);
        let logits = a.actor_logits(&[1.0, 4.0, 2.5]).unwrap();
        let swapped = a.actor_logits(&[2.5, 4.0, 1.0]).unwrap();
        assert_eq!(logits.len(), 6);
        assert_eq!(&logits[0..2], &swapped[4..6]);
        assert_eq!(&logits[2..4], &swapped[2..4]);
        assert_eq!(&logits[4..6], &swapped[0..2]);
    }

    #[test]
    fn shared_update_raises_rewarded_action() {
        let mut a = shared_agent(3, 1);
        let s = vec![1.0, 3.0, 9.0];
        let action = vec![1, 0, 1];
        let lp = |a: &PpoAgent<PerEntry>| a.policy().log_prob(&a.actor_logits(&s).unwrap(), &action);
        let before = lp(&a);
        let logits = a.actor_logits(&s).unwrap();
        let t = Transition {
            log_prob: a.policy().log_prob(&logits, &action),
            state: s.clone(),
            action: action.clone(),
            reward: 1.0,
            value_estimate: 0.0,
        };
        a.record(t).unwrap();
        assert!(lp(&a) > before);
    }

    #[test]
    fn output_prior_sets_last_biases() {
        let mut a = shared_agent(2, 1);
        a.set_output_prior(&[3.0, 0.0], 0.0).unwrap();
        for s in [[1.0, 2.0], [5.0, 1.5]] {
            assert_eq!(a.actor_logits(&s).unwrap(), vec![3.0, 0.0, 3.0, 0.0]);
        }
        assert!(a.set_output_prior(&[1.0], 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = PpoConfig {
            clip_eps: 1.0,
            ..PpoConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PpoConfig {
            gamma: 1.5,
            ..PpoConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PpoConfig::default().validate().is_ok());
    }
}
