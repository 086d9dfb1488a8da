use crate::config::ScenarioConfig;
use crate::env::{self, HybridAction, TeamState};
use crate::error::{Error, Result};

/// Team cost of a lone robot driving at constant speed `v` with its guard on
/// the single adversary, integrated with step `fine_dt` until arrival.
/// Returns `(v, J)` pairs sorted by speed.
pub fn constant_speed_sweep(
    cfg: &ScenarioConfig,
    speeds: &[f64],
    fine_dt: f64,
) -> Result<Vec<(f64, f64)>> {
    if cfg.n_robots != 1 || cfg.n_adversaries() != 1 {
        return Err(Error::InvalidConfig(format!(
            "constant-speed sweep needs one robot and one adversary, got n={} m={}",
            cfg.n_robots,
            cfg.n_adversaries()
        )));
    }
    if !(fine_dt > 0.0 && fine_dt <= 0.01) {
        return Err(Error::InvalidConfig(format!(
            "fine_dt {fine_dt} outside (0, 0.01]"
        )));
    }
    let mut sorted = speeds.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .map(|v| {
            if !(v > 0.0 && v <= cfg.v_max) {
                return Err(Error::InvalidAction(format!(
                    "sweep speed {v} outside (0, v_max]; the robot would never arrive"
                )));
            }
            let mut fine = cfg.clone();
            fine.dt = fine_dt;
            fine.horizon = (cfg.route_length / (v * fine_dt)).ceil() as usize + 2;
            let action = HybridAction::new(vec![v], vec![0]);
            let mut state = TeamState::initial(&fine);
            let mut cost = 0.0;
            while !state.all_arrived(&fine) {
                let out = env::step(&state, &action, &fine)?;
                cost += out.risk[0] + out.penalty[0];
                state = out.next_state;
            }
            Ok((v, cost))
        })
        .collect()
}
