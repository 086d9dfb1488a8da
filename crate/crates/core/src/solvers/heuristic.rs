use crate::config::ScenarioConfig;
use crate::env::{HybridAction, TeamState};
use crate::error::{Error, Result};

/// Zone with its holding points: where waiting robots stop before and after
/// crossing. On an integer grid these are rounded inward so holders stay
/// inside the zone and their guard counts.
#[derive(Debug, Clone, Copy)]
struct Hold {
    adversary: usize,
    entry: f64,
    exit: f64,
}

fn holds(state: &TeamState, cfg: &ScenarioConfig) -> Result<Vec<Hold>> {
    let grid = cfg.dt == 1.0
        && cfg.v_max.fract() == 0.0
        && state.positions.iter().all(|s| s.fract() == 0.0);
    let mut zones: Vec<(usize, f64, f64)> = (0..cfg.n_adversaries())
        .map(|j| {
            let (lo, hi) = cfg.zone(j, state.adversaries[j]);
            (j, lo, hi)
        })
        .collect();
    zones.sort_by(|a, b| a.1.total_cmp(&b.1));
    for w in zones.windows(2) {
        if w[1].1 < w[0].2 {
            return Err(Error::HeuristicScope(format!(
                "zones of adversaries {} and {} overlap",
                w[0].0 + 1,
                w[1].0 + 1
            )));
        }
    }
    Ok(zones
        .into_iter()
        .map(|(j, lo, hi)| {
            let (entry, exit) = if grid {
                (lo.ceil(), hi.floor())
            } else {
                (lo, hi)
            };
            Hold {
                adversary: j,
                entry,
                exit: exit.max(entry),
            }
        })
        .collect())
}

/// Bounding-overwatch schedule. Robots approach a zone and hold at its
/// entry point; one robot at a time crosses at full speed while the others
/// hold and guard, and a robot that has crossed holds at the exit point,
/// guarding, until every teammate has crossed. Outside zones everyone
/// drives at `v_max`.
pub fn overwatch_heuristic(state: &TeamState, cfg: &ScenarioConfig) -> Result<HybridAction> {
    state.validate(cfg)?;
    let holds = holds(state, cfg)?;
    let l = cfg.route_length;
    let pos = &state.positions;
    let active: Vec<usize> = (0..pos.len()).filter(|&i| pos[i] < l).collect();
    let mut action = HybridAction::full_speed(cfg);
    let toward = |s: f64, target: f64| ((target - s) / cfg.dt).clamp(0.0, cfg.v_max);

    for &i in &active {
        let s = pos[i];
        let Some(h) = holds.iter().find(|h| s <= h.exit) else {
            continue;
        };
        action.guards[i] = h.adversary;
        let others = active.iter().copied().filter(|&k| k != i);
        let behind = others.clone().any(|k| pos[k] < h.exit);
        let speed = if s < h.entry {
            if active.len() > 1 {
                toward(s, h.entry)
            } else {
                cfg.v_max
            }
        } else if s == h.exit {
            if behind {
                0.0
            } else {
                cfg.v_max
            }
        } else if s == h.entry {
            let crossing = others.clone().any(|k| pos[k] > h.entry && pos[k] < h.exit);
            let first_in_line = others.clone().all(|k| pos[k] != h.entry || k > i);
            if crossing || !first_in_line {
                0.0
            } else if behind {
                toward(s, h.exit)
            } else {
                cfg.v_max
            }
        } else if behind {
            toward(s, h.exit)
        } else {
            cfg.v_max
        };
        action.speeds[i] = speed;
    }
    Ok(action)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_at_entry_splits_roles() {
        let cfg = ScenarioConfig::preset("m1").unwrap();
        let (lo, _) = cfg.zone(0, 35.0);
        let mut s = TeamState::initial(&cfg);
        s.positions = vec![lo, lo];
        let a = overwatch_heuristic(&s, &cfg).unwrap();
        assert_eq!(a.speeds, vec![cfg.v_max, 0.0]);
        assert_eq!(a.guards[1], 0);
    }

    #[test]
    fn single_robot_always_full_speed() {
        let cfg = ScenarioConfig::preset("m1").unwrap().with_robots(1);
        for s in 0..70 {
            let mut st = TeamState::initial(&cfg);
            st.positions = vec![s as f64];
            assert_eq!(
                overwatch_heuristic(&st, &cfg).unwrap().speeds,
                vec![cfg.v_max]
            );
        }
    }

    #[test]
    fn overlapping_zones_rejected() {
        let cfg = ScenarioConfig::preset("m2").unwrap();
        let s = TeamState::initial(&cfg);
        assert!(matches!(
            overwatch_heuristic(&s, &cfg),
            Err(Error::HeuristicScope(_))
        ));
    }
}
