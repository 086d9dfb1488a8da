//! Closed-loop episode rollouts shared by the solvers, learners and harness.

use crate::config::ScenarioConfig;
use crate::env::{self, HybridAction, StepOutcome, TeamState};
use crate::error::{Error, Result};

/// Mid-episode move of one adversary, applied before the action at `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relocation {
    pub step: usize,
    pub adversary: usize,
    pub position: f64,
}

/// One transition as observed by the policy: the state it acted in (after
/// any relocation at that step), the action, and the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: TeamState,
    pub action: HybridAction,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: TeamState,
    pub transitions: Vec<Transition>,
    pub relocations: Vec<Relocation>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted sum of raw rewards, i.e. `-J / reward_scale`.
    pub fn raw_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.outcome.raw_reward).sum()
    }

    pub fn shaped_return(&self) -> f64 {
        self.transitions
            .iter()
            .map(|t| t.outcome.shaped_reward)
            .sum()
    }

    pub fn discounted_shaped_return(&self, gamma: f64) -> f64 {
        self.transitions
            .iter()
            .rev()
            .fold(0.0, |acc, t| t.outcome.shaped_reward + gamma * acc)
    }

    pub fn final_state(&self) -> &TeamState {
        self.transitions
            .last()
            .map_or(&self.initial, |t| &t.outcome.next_state)
    }

    pub fn all_arrived(&self, cfg: &ScenarioConfig) -> bool {
        self.final_state().all_arrived(cfg)
    }
}

/// Runs `policy` from `start` until the episode ends, applying
/// `relocations` at their scheduled steps.
pub fn run_episode<F>(
    cfg: &ScenarioConfig,
    start: TeamState,
    relocations: &[Relocation],
    mut policy: F,
) -> Result<Trajectory>
where
    F: FnMut(&TeamState) -> Result<HybridAction>,
{
    start.validate(cfg)?;
    for r in relocations {
        if r.step >= cfg.horizon {
            return Err(Error::InvalidConfig(format!(
                "relocation at step {} is not before the horizon {}",
                r.step, cfg.horizon
            )));
        }
    }
    let mut state = start.clone();
    let mut transitions = Vec::new();
    let mut applied = Vec::new();
    while !state.is_done(cfg) {
        let t = state.t;
        for r in relocations.iter().filter(|r| r.step == t) {
            state = env::relocate_adversary(&state, r.adversary, r.position, cfg)?;
            applied.push(*r);
        }
        let action = policy(&state)?;
        let outcome = env::step(&state, &action, cfg)?;
        let next = outcome.next_state.clone();
        transitions.push(Transition {
            state,
            action,
            outcome,
        });
        state = next;
    }
    Ok(Trajectory {
        initial: start,
        transitions,
        relocations: applied,
    })
}
