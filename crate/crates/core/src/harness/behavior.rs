//! Behavioral checks computed from a trajectory alone.

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::trajectory::Trajectory;

/// Distance from a zone boundary that still counts as "at" it.
pub const BOUNDARY_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorReport {
    /// Every step with a robot moving strictly inside a zone is covered by
    /// a stationary teammate at that zone's boundary guarding it, and at
    /// least one such step exists.
    pub overwatch_detected: bool,
    /// Fraction of in-zone moving steps that were covered (1 if none).
    pub guard_at_boundary_fraction: f64,
    /// Robot-steps with a speed strictly between 0 and v_max.
    pub intermediate_speed_steps: usize,
    pub all_arrived: bool,
    /// Steps where a robot that guarded from a boundary on the previous
    /// step moves off while a teammate is still strictly inside that zone.
    pub guard_early_departures: usize,
    /// Steps with a robot moving strictly inside a zone.
    pub exposed_steps: usize,
}

fn at_boundary(s: f64, lo: f64, hi: f64) -> bool {
    (s - lo).abs() <= BOUNDARY_TOLERANCE || (s - hi).abs() <= BOUNDARY_TOLERANCE
}

fn inside(s: f64, lo: f64, hi: f64) -> bool {
    s > lo && s < hi
}

pub fn detect_overwatch(traj: &Trajectory, cfg: &ScenarioConfig) -> BehaviorReport {
    let n = cfg.n_robots;
    let mut exposed = 0;
    let mut covered = 0;
    let mut intermediate = 0;
    let mut departures = 0;
    for (k, tr) in traj.transitions.iter().enumerate() {
        let s = &tr.state.positions;
        let a = &tr.action;
        let active = |i: usize| s[i] < cfg.route_length;
        intermediate += (0..n)
            .filter(|&i| active(i) && a.speeds[i] > 0.0 && a.speeds[i] < cfg.v_max)
            .count();
        for (j, &z) in tr.state.adversaries.iter().enumerate() {
            let (lo, hi) = cfg.zone(j, z);
            let guarding = |i: usize| {
                active(i) && a.speeds[i] == 0.0 && a.guards[i] == j && at_boundary(s[i], lo, hi)
            };
            for (i, &si) in s.iter().enumerate() {
                if active(i) && inside(si, lo, hi) && a.speeds[i] > 0.0 {
                    exposed += 1;
                    if (0..n).any(|o| o != i && guarding(o)) {
                        covered += 1;
                    }
                }
            }
            if k > 0 {
                let prev = &traj.transitions[k - 1];
                let was_guarding = |i: usize| {
                    prev.action.speeds[i] == 0.0
                        && prev.action.guards[i] == j
                        && prev.state.adversaries[j] == z
                        && at_boundary(prev.state.positions[i], lo, hi)
                };
                let leaving = (0..n).any(|i| {
                    active(i)
                        && was_guarding(i)
                        && a.speeds[i] > 0.0
                        && (0..n).any(|o| o != i && active(o) && inside(s[o], lo, hi))
                });
                if leaving {
                    departures += 1;
                }
            }
        }
    }
    BehaviorReport {
        overwatch_detected: exposed > 0 && covered == exposed,
        guard_at_boundary_fraction: if exposed == 0 {
            1.0
        } else {
            covered as f64 / exposed as f64
        },
        intermediate_speed_steps: intermediate,
        all_arrived: traj.all_arrived(cfg),
        guard_early_departures: departures,
        exposed_steps: exposed,
    }
}

/// Whether, after the first relocation, some robot holds still within the
/// boundary tolerance of the relocated adversary's new zone while guarding
/// it.
pub fn restations_after_relocation(traj: &Trajectory, cfg: &ScenarioConfig) -> bool {
    let Some(r) = traj.relocations.first() else {
        return false;
    };
    let (lo, hi) = cfg.zone(r.adversary, r.position);
    traj.transitions.iter().skip(r.step).any(|tr| {
        (0..cfg.n_robots).any(|i| {
            let s = tr.state.positions[i];
            s < cfg.route_length
                && tr.action.speeds[i] == 0.0
                && tr.action.guards[i] == r.adversary
                && at_boundary(s, lo, hi)
        })
    })
}
