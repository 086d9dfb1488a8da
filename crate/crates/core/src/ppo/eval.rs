use crate::config::ScenarioConfig;
use crate::env::TeamState;
use crate::error::Result;
use crate::ppo::policy::PolicyParams;
use crate::trajectory::{run_episode, Relocation, Trajectory};

/// Deterministic rollout of the policy mode from `start`. With `snap`,
/// hybrid speeds are rounded onto the integer speed set.
pub fn policy_episode(
    params: &PolicyParams,
    cfg: &ScenarioConfig,
    start: TeamState,
    relocations: &[Relocation],
    snap: bool,
) -> Result<Trajectory> {
    params.check_compatible(cfg)?;
    run_episode(cfg, start, relocations, |s| {
        let enc = params.encode(s, cfg)?;
        params.greedy_action(&enc, snap)
    })
}

/// Mean raw return of deterministic rollouts over every placement in
/// `placements`.
pub fn evaluate_policy(
    params: &PolicyParams,
    cfg: &ScenarioConfig,
    placements: &[Vec<f64>],
    snap: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for p in placements {
        let start = TeamState::new(cfg, p.clone())?;
        total += policy_episode(params, cfg, start, &[], snap)?.raw_return();
    }
    Ok(total / placements.len().max(1) as f64)
}
