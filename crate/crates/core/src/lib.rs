//! Deterministic simulator for heterogeneity-aware federated learning.
//!
//! Two PPO agents decide, every round, which model tier each selected client
//! trains and how many local epochs it runs. Clients train a shared LiteModel
//! and a tier-specific local model by mutual distillation, and the server
//! aggregates both with entropy and accuracy weights. All time is simulated,
//! so runs are reproducible bit for bit from a seed.

// `!(x > 0.0)` style checks are how NaN gets rejected alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod client;
pub mod convergence;
pub mod data;
mod error;
pub mod nn;
pub mod orchestrator;
pub mod rl;
pub mod seed;

pub use error::{Error, Result};
