//! Coordination of a robot team traversing a route past adversaries.
//!
//! Robots trade travel speed against guarding: a slow robot inside an
//! adversary's zone discounts the risk that adversary imposes on the whole
//! team. The crate provides the environment model, a weighted-hot state
//! encoder, exact and heuristic reference policies, a small dense-network
//! autodiff stack, PPO learners with discrete and hybrid action heads, and
//! the experiment harness behind the `overwatch` CLI.

pub mod config;
pub mod encoder;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod ppo;
pub mod solvers;
pub mod trajectory;

pub use config::{AdversarySpec, RiskProfile, ScenarioConfig};
pub use env::{HybridAction, StepOutcome, TeamState};
pub use error::{Error, Result};
