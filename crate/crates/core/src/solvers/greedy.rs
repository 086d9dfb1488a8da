use crate::config::ScenarioConfig;
use crate::env::{self, HybridAction, TeamState};
use crate::error::Result;

/// Decoupled one-step policy: every robot picks the `(speed, guard)` pair
/// minimising its own cost for the current step, counting only its own
/// guard discount. Ties go to the higher speed, then the lower guard index.
pub fn greedy_baseline(state: &TeamState, cfg: &ScenarioConfig) -> Result<HybridAction> {
    state.validate(cfg)?;
    let speeds = cfg.discrete_speeds();
    let n_guards = cfg.n_adversaries().max(1);
    let mut action = HybridAction::full_speed(cfg);
    for (i, &s) in state.positions.iter().enumerate() {
        if s >= cfg.route_length {
            continue;
        }
        let mut best: Option<(f64, f64, usize)> = None;
        for &v in speeds.iter().rev() {
            for g in 0..n_guards {
                let cost = own_step_cost(s, v, g, state, cfg);
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, v, g));
                }
            }
        }
        let (_, v, g) = best.expect("non-empty speed set");
        action.speeds[i] = v;
        action.guards[i] = g;
    }
    Ok(action)
}

/// `(R_i + P_i) * dt` for robot at `s` taking `(v, g)`, ignoring teammates.
pub fn own_step_cost(s: f64, v: f64, g: usize, state: &TeamState, cfg: &ScenarioConfig) -> f64 {
    let risk: f64 = cfg
        .adversaries
        .iter()
        .enumerate()
        .map(|(j, adv)| {
            let z = state.adversaries[j];
            env::guard_discount(v, g, j, s, z, cfg) * env::unit_risk(s, z, adv, cfg)
        })
        .sum();
    (risk + env::time_penalty(s, cfg)) * cfg.dt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outside_zones_full_speed() {
        let cfg = ScenarioConfig::preset("m1").unwrap();
        let mut s = TeamState::initial(&cfg);
        s.positions = vec![3.0, 60.0];
        let a = greedy_baseline(&s, &cfg).unwrap();
        assert_eq!(a.speeds, vec![3.0, 3.0]);
        assert_eq!(a.guards, vec![0, 0]);
    }

    #[test]
    fn inside_zone_prefers_slow_guarding() {
        let cfg = ScenarioConfig::preset("m1").unwrap();
        let mut s = TeamState::initial(&cfg);
        s.positions = vec![35.0, 0.0];
        let a = greedy_baseline(&s, &cfg).unwrap();
        assert_eq!(a.speeds[0], 0.0);
    }
}
