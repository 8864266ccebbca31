//! PPO agents that plan each round: one assigns model tiers, the other splits
//! the round's epoch budget across clients.

mod allocation;
mod intensity;
mod ppo;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use allocation::{ppo1_act, ppo1_reward, ppo1_state, AllocationAction, AllocationPolicy};
pub use intensity::{allocate_intensity, ppo2_act, ppo2_reward, ppo2_state, IntensityAction, IntensityPolicy};
pub use ppo::{read_checkpoint, ActorLayout, AgentHeader, Policy, PpoAgent, PpoConfig, UpdateStats, SHARED_FEATURES};

/// Whether an agent samples from its policy or acts deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<A> {
    pub state: Vec<f64>,
    pub action: A,
    pub log_prob: f64,
    pub reward: f64,
    pub value_estimate: f64,
}

/// Bounded FIFO of transitions; pushing past capacity evicts the oldest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<A> {
    capacity: usize,
    items: VecDeque<Transition<A>>,
}

impl<A> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, transition: Transition<A>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<A>> {
        self.items.iter()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// Discounted returns over a finite window with zero bootstrap:
/// `G[t] = r[t] + gamma * G[t + 1]`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-softmax of one head of logits.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(reward: f64) -> Transition<u8> {
        Transition {
            state: vec![1.0],
            action: 0,
            log_prob: 0.0,
            reward,
            value_estimate: 0.0,
        }
    }

    #[test]
    fn returns_examples() {
        assert_eq!(discounted_returns(&[1.0, 2.0, 3.0], 0.0), vec![1.0, 2.0, 3.0]);
        assert_eq!(discounted_returns(&[1.0, 1.0], 0.5), vec![1.5, 1.0]);
        assert_eq!(discounted_returns(&[0.0; 4], 0.9), vec![0.0; 4]);
    }

    #[test]
    fn returns_follow_recurrence() {
        let r = [0.3, -1.0, 2.5, 0.7];
        let g = discounted_returns(&r, 0.9);
        assert_eq!(g[3], r[3]);
        for i in 0..3 {
            assert!((g[i] - (r[i] + 0.9 * g[i + 1])).abs() < 1e-12);
        }
    }

    #[test]
    fn buffer_keeps_most_recent() {
        let mut b = ReplayBuffer::new(5);
        for i in 0..6 {
            b.push(t(i as f64));
        }
        assert!(b.is_full());
        let rewards: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }
}
