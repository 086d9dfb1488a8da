//! Clipped-surrogate policy optimization with a centralized actor-critic.
//!
//! Two action heads share one code path: [`Variant::Discrete`] draws each
//! robot's speed from the integer speed set, [`Variant::Hybrid`] draws it
//! from a Gaussian clamped into `[0, v_max]`. Guard targets are categorical
//! in both, and the joint log-probability is the sum over robots of speed
//! and guard terms.

pub mod buffer;
pub mod eval;
pub mod policy;
pub mod train;
pub mod update;

pub use buffer::{normalize, Boundary, RolloutBatch};
pub use eval::{evaluate_policy, policy_episode};
pub use policy::{
    load_policy, read_policy, save_policy, Encoding, PolicyParams, SampledAction, Variant,
};
pub use train::{
    read_curve, train, train_with, write_curve, CurvePoint, TrainConfig, TrainOutcome,
};
pub use update::{minibatch_loss, new_optimizer, ppo_update, MinibatchLoss, UpdateStats};
