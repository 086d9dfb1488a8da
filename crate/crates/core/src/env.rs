//! Route-traversal environment: dynamics, adversary risk, guard discounts,
//! team cost and the reshaped MDP reward.
//!
//! Everything here is a pure function of `(state, action, config)`. The
//! [`Episode`] wrapper only adds the "already finished" bookkeeping.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::config::{AdversarySpec, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TeamState {
    pub positions: Vec<f64>,
    pub adversaries: Vec<f64>,
    pub t: usize,
}

impl TeamState {
    /// All robots at the start of the route, adversaries at `placement`.
    pub fn new(cfg: &ScenarioConfig, placement: Vec<f64>) -> Result<Self> {
        if placement.len() != cfg.n_adversaries() {
            return Err(Error::InvalidState(format!(
                "expected {} adversary positions, got {}",
                cfg.n_adversaries(),
                placement.len()
            )));
        }
        for (j, &z) in placement.iter().enumerate() {
            if !cfg.adversaries[j].in_support(z) {
                return Err(Error::NotInSupport {
                    adversary: j,
                    position: z,
                });
            }
        }
        Ok(TeamState {
            positions: vec![0.0; cfg.n_robots],
            adversaries: placement,
            t: 0,
        })
    }

    pub fn initial(cfg: &ScenarioConfig) -> Self {
        TeamState {
            positions: vec![0.0; cfg.n_robots],
            adversaries: cfg.default_placement(),
            t: 0,
        }
    }

    /// Start state with every adversary drawn uniformly from its support.
    pub fn sample<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Self {
        let adversaries = cfg
            .adversaries
            .iter()
            .map(|a| *a.support.choose(rng).expect("validated non-empty support"))
            .collect();
        TeamState {
            positions: vec![0.0; cfg.n_robots],
            adversaries,
            t: 0,
        }
    }

    pub fn all_arrived(&self, cfg: &ScenarioConfig) -> bool {
        self.positions.iter().all(|&s| s >= cfg.route_length)
    }

    pub fn is_done(&self, cfg: &ScenarioConfig) -> bool {
        self.all_arrived(cfg) || self.t >= cfg.horizon
    }

    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.positions.len() != cfg.n_robots || self.adversaries.len() != cfg.n_adversaries() {
            return Err(Error::InvalidState(format!(
                "state has {} robots / {} adversaries, scenario expects {} / {}",
                self.positions.len(),
                self.adversaries.len(),
                cfg.n_robots,
                cfg.n_adversaries()
            )));
        }
        if let Some(s) = self
            .positions
            .iter()
            .find(|&&s| !(s >= 0.0 && s <= cfg.route_length))
        {
            return Err(Error::InvalidState(format!(
                "robot position {s} outside [0, L]"
            )));
        }
        if self.t > cfg.horizon {
            return Err(Error::InvalidState(format!(
                "step {} beyond horizon {}",
                self.t, cfg.horizon
            )));
        }
        Ok(())
    }
}

/// Per-robot `(speed, guard target)` pairs. Guard targets are 0-based
/// adversary indices; they are ignored when the scenario has no adversaries.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridAction {
    pub speeds: Vec<f64>,
    pub guards: Vec<usize>,
}

impl HybridAction {
    pub fn new(speeds: Vec<f64>, guards: Vec<usize>) -> Self {
        HybridAction { speeds, guards }
    }

    pub fn full_speed(cfg: &ScenarioConfig) -> Self {
        HybridAction {
            speeds: vec![cfg.v_max; cfg.n_robots],
            guards: vec![0; cfg.n_robots],
        }
    }

    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.speeds.len() != cfg.n_robots || self.guards.len() != cfg.n_robots {
            return Err(Error::InvalidAction(format!(
                "action covers {} speeds / {} guards for {} robots",
                self.speeds.len(),
                self.guards.len(),
                cfg.n_robots
            )));
        }
        for &v in &self.speeds {
            check_speed(v, cfg)?;
        }
        let limit = cfg.n_adversaries().max(1);
        if let Some(g) = self.guards.iter().find(|&&g| g >= limit) {
            return Err(Error::InvalidAction(format!(
                "guard target {g} out of range for {} adversaries",
                cfg.n_adversaries()
            )));
        }
        Ok(())
    }
}

fn check_speed(v: f64, cfg: &ScenarioConfig) -> Result<()> {
    if !(v >= 0.0 && v <= cfg.v_max) {
        return Err(Error::InvalidAction(format!(
            "speed {v} outside [0, {}]",
            cfg.v_max
        )));
    }
    Ok(())
}

/// Per-step team cost components, as rates (before multiplying by `dt`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepCost {
    pub risk: Vec<f64>,
    pub penalty: Vec<f64>,
    /// `discount[k][j]`: robot k's guard multiplier on adversary j.
    pub discount: Vec<Vec<f64>>,
}

impl StepCost {
    pub fn total(&self) -> f64 {
        self.risk
            .iter()
            .zip(&self.penalty)
            .map(|(r, p)| r + p)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: TeamState,
    pub raw_reward: f64,
    pub shaped_reward: f64,
    /// Risk accumulated by each robot over this step (`R_i^t * dt`).
    pub risk: Vec<f64>,
    /// Time penalty accumulated by each robot over this step (`P_i^t * dt`).
    pub penalty: Vec<f64>,
    pub discount: Vec<Vec<f64>>,
    pub done: bool,
}

pub fn advance_position(s: f64, v: f64, cfg: &ScenarioConfig) -> Result<f64> {
    check_speed(v, cfg)?;
    Ok((s + v * cfg.dt).min(cfg.route_length))
}

pub fn time_penalty(s: f64, cfg: &ScenarioConfig) -> f64 {
    if s < cfg.route_length {
        cfg.time_penalty
    } else {
        0.0
    }
}

/// Unit risk at `s` from adversary `adv` currently located at `z`.
pub fn unit_risk(s: f64, z: f64, adv: &AdversarySpec, cfg: &ScenarioConfig) -> f64 {
    adv.risk.risk(s, z, cfg.route_length)
}

pub fn in_zone(s: f64, j: usize, z: f64, cfg: &ScenarioConfig) -> bool {
    let (lo, hi) = cfg.zone(j, z);
    s >= lo && s <= hi
}

/// Multiplier robot k applies to adversary j's risk. Guarding only takes
/// effect while the guard itself sits inside j's zone.
pub fn guard_discount(
    v_k: f64,
    g_k: usize,
    j: usize,
    s_k: f64,
    z_j: f64,
    cfg: &ScenarioConfig,
) -> f64 {
    if g_k != j || !in_zone(s_k, j, z_j, cfg) {
        return 1.0;
    }
    let beta = cfg.beta_for(j);
    1.0 - beta * (cfg.v_max - v_k).abs() / cfg.v_max
}

pub fn team_step_cost(
    state: &TeamState,
    action: &HybridAction,
    cfg: &ScenarioConfig,
) -> Result<StepCost> {
    state.validate(cfg)?;
    action.validate(cfg)?;
    let n = cfg.n_robots;
    let m = cfg.n_adversaries();
    let l = cfg.route_length;

    let mut discount = vec![vec![1.0; m]; n];
    for (k, row) in discount.iter_mut().enumerate() {
        let s_k = state.positions[k];
        if s_k >= l {
            continue;
        }
        for (j, d) in row.iter_mut().enumerate() {
            *d = guard_discount(
                action.speeds[k],
                action.guards[k],
                j,
                s_k,
                state.adversaries[j],
                cfg,
            );
        }
    }
    let team_discount: Vec<f64> = (0..m)
        .map(|j| discount.iter().map(|row| row[j]).product())
        .collect();

    let mut risk = vec![0.0; n];
    let mut penalty = vec![0.0; n];
    for i in 0..n {
        let s_i = state.positions[i];
        if s_i >= l {
            continue;
        }
        risk[i] = (0..m)
            .map(|j| {
                team_discount[j] * unit_risk(s_i, state.adversaries[j], &cfg.adversaries[j], cfg)
            })
            .sum();
        penalty[i] = time_penalty(s_i, cfg);
    }
    Ok(StepCost {
        risk,
        penalty,
        discount,
    })
}

/// Shaping potential: progress term plus the terminal bonus, expressed so
/// that the per-step bonus is `gamma * phi(next) - phi(prev)` for every
/// transition out of a non-terminal state.
pub fn shaping_potential(state: &TeamState, cfg: &ScenarioConfig) -> f64 {
    let progress: f64 = cfg.shaping_c * state.positions.iter().sum::<f64>();
    if state.all_arrived(cfg) {
        progress + cfg.terminal_q / cfg.gamma
    } else {
        progress
    }
}

/// Terminal bonus plus progress shaping for one transition, in cost units.
pub fn shaping_bonus(prev: &TeamState, next: &TeamState, cfg: &ScenarioConfig) -> f64 {
    let terminal = if next.all_arrived(cfg) && !prev.all_arrived(cfg) {
        cfg.terminal_q
    } else {
        0.0
    };
    let progress: f64 = prev
        .positions
        .iter()
        .zip(&next.positions)
        .map(|(&s, &s_next)| cfg.gamma * s_next - s)
        .sum();
    terminal + cfg.shaping_c * progress
}

pub fn reshape_reward(prev: &TeamState, next: &TeamState, raw: f64, cfg: &ScenarioConfig) -> f64 {
    raw + shaping_bonus(prev, next, cfg) / cfg.reward_scale
}

/// One transition. States with every robot arrived are absorbing (zero
/// reward, `done`); stepping past the horizon is an error.
pub fn step(state: &TeamState, action: &HybridAction, cfg: &ScenarioConfig) -> Result<StepOutcome> {
    if state.t >= cfg.horizon {
        return Err(Error::EpisodeDone { t: state.t });
    }
    let cost = team_step_cost(state, action, cfg)?;
    let positions = state
        .positions
        .iter()
        .zip(&action.speeds)
        .map(|(&s, &v)| {
            if s >= cfg.route_length {
                s
            } else {
                (s + v * cfg.dt).min(cfg.route_length)
            }
        })
        .collect();
    let next_state = TeamState {
        positions,
        adversaries: state.adversaries.clone(),
        t: state.t + 1,
    };
    let risk: Vec<f64> = cost.risk.iter().map(|r| r * cfg.dt).collect();
    let penalty: Vec<f64> = cost.penalty.iter().map(|p| p * cfg.dt).collect();
    let total: f64 = risk.iter().zip(&penalty).map(|(r, p)| r + p).sum();
    let raw_reward = -total / cfg.reward_scale;
    let shaped_reward = if state.all_arrived(cfg) {
        0.0
    } else {
        reshape_reward(state, &next_state, raw_reward, cfg)
    };
    let done = next_state.is_done(cfg);
    Ok(StepOutcome {
        next_state,
        raw_reward,
        shaped_reward,
        risk,
        penalty,
        discount: cost.discount,
        done,
    })
}

/// Moves adversary `j` to `new_z`; robots are untouched and the zone
/// follows the new position.
pub fn relocate_adversary(
    state: &TeamState,
    j: usize,
    new_z: f64,
    cfg: &ScenarioConfig,
) -> Result<TeamState> {
    let adv = cfg
        .adversaries
        .get(j)
        .ok_or_else(|| Error::InvalidState(format!("no adversary with index {j}")))?;
    if !adv.in_support(new_z) {
        return Err(Error::NotInSupport {
            adversary: j,
            position: new_z,
        });
    }
    let mut next = state.clone();
    next.adversaries[j] = new_z;
    Ok(next)
}

/// Stateful wrapper refusing to step a finished episode.
#[derive(Debug, Clone)]
pub struct Episode {
    cfg: ScenarioConfig,
    state: TeamState,
    done: bool,
}

impl Episode {
    pub fn new(cfg: ScenarioConfig, state: TeamState) -> Result<Self> {
        state.validate(&cfg)?;
        let done = state.is_done(&cfg);
        Ok(Episode { cfg, state, done })
    }

    pub fn state(&self) -> &TeamState {
        &self.state
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: &HybridAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone { t: self.state.t });
        }
        let out = step(&self.state, action, &self.cfg)?;
        self.state = out.next_state.clone();
        self.done = out.done;
        Ok(out)
    }

    pub fn relocate(&mut self, j: usize, new_z: f64) -> Result<()> {
        self.state = relocate_adversary(&self.state, j, new_z, &self.cfg)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> ScenarioConfig {
        ScenarioConfig::preset("m1").unwrap()
    }

    fn state(cfg: &ScenarioConfig, positions: Vec<f64>) -> TeamState {
        TeamState {
            positions,
            adversaries: cfg.default_placement(),
            t: 0,
        }
    }

    #[test]
    fn advance_examples() {
        let cfg = m1();
        assert_eq!(advance_position(28.0, 3.0, &cfg).unwrap(), 31.0);
        assert_eq!(advance_position(5.0, 0.0, &cfg).unwrap(), 5.0);
        assert_eq!(advance_position(69.0, 3.0, &cfg).unwrap(), 70.0);
        assert!(matches!(
            advance_position(5.0, 3.5, &cfg),
            Err(Error::InvalidAction(_))
        ));
        assert!(advance_position(5.0, -0.1, &cfg).is_err());
    }

    #[test]
    fn time_penalty_examples() {
        let cfg = m1();
        assert_eq!(time_penalty(30.0, &cfg), 1.0);
        assert_eq!(time_penalty(70.0, &cfg), 0.0);
        assert_eq!(time_penalty(70.0 - 1e-9, &cfg), 1.0);
    }

    #[test]
    fn unit_risk_examples() {
        let cfg = m1();
        let adv = &cfg.adversaries[0];
        assert_eq!(unit_risk(35.0, 35.0, adv, &cfg), 6.0);
        assert_eq!(unit_risk(29.0, 35.0, adv, &cfg), 0.0);
        assert_eq!(unit_risk(41.0, 35.0, adv, &cfg), 0.0);
        assert_eq!(unit_risk(37.0, 35.0, adv, &cfg), 4.0);
        assert_eq!(unit_risk(10.0, 35.0, adv, &cfg), 0.0);
    }

    #[test]
    fn guard_discount_examples() {
        let cfg = m1();
        assert!((guard_discount(0.0, 0, 0, 33.0, 35.0, &cfg) - 0.4).abs() < 1e-15);
        assert_eq!(guard_discount(3.0, 0, 0, 33.0, 35.0, &cfg), 1.0);
        assert!((guard_discount(1.5, 0, 0, 33.0, 35.0, &cfg) - 0.7).abs() < 1e-15);
        // guarding from outside the zone has no effect
        assert_eq!(guard_discount(0.0, 0, 0, 20.0, 35.0, &cfg), 1.0);
    }

    #[test]
    fn team_cost_one_mover_one_guard() {
        let cfg = m1();
        let s = state(&cfg, vec![35.0, 29.0]);
        let a = HybridAction::new(vec![3.0, 0.0], vec![0, 0]);
        let c = team_step_cost(&s, &a, &cfg).unwrap();
        assert_eq!(c.discount[0][0], 1.0);
        assert!((c.discount[1][0] - 0.4).abs() < 1e-15);
        assert!((c.risk[0] - 2.4).abs() < 1e-12);
        assert_eq!(c.risk[1], 0.0);
        assert_eq!(c.penalty, vec![1.0, 1.0]);

        let out = step(&s, &a, &cfg).unwrap();
        assert!((out.raw_reward + 4.4 / cfg.reward_scale).abs() < 1e-12);
    }

    #[test]
    fn stacked_guards() {
        let cfg = m1().with_robots(3);
        let s = state(&cfg, vec![35.0, 29.0, 41.0]);
        let a = HybridAction::new(vec![3.0, 0.0, 0.0], vec![0, 0, 0]);
        let c = team_step_cost(&s, &a, &cfg).unwrap();
        assert!((c.risk[0] - 0.96).abs() < 1e-12);
    }

    #[test]
    fn no_risk_outside_zones() {
        let cfg = m1();
        let s = state(&cfg, vec![3.0, 60.0]);
        let a = HybridAction::new(vec![0.0, 0.0], vec![0, 0]);
        let c = team_step_cost(&s, &a, &cfg).unwrap();
        assert_eq!(c.risk, vec![0.0, 0.0]);
    }

    #[test]
    fn arrived_team_is_absorbing() {
        let cfg = m1();
        let s = state(&cfg, vec![70.0, 70.0]);
        let out = step(&s, &HybridAction::full_speed(&cfg), &cfg).unwrap();
        assert_eq!(out.raw_reward, 0.0);
        assert_eq!(out.shaped_reward, 0.0);
        assert!(out.done);
        assert_eq!(out.next_state.positions, vec![70.0, 70.0]);
    }

    #[test]
    fn penalty_only_step() {
        let cfg = m1().with_robots(1);
        let s = state(&cfg, vec![3.0]);
        let out = step(&s, &HybridAction::full_speed(&cfg), &cfg).unwrap();
        assert_eq!(out.raw_reward, -1.0 / cfg.reward_scale);
    }

    #[test]
    fn stepping_past_horizon_is_error() {
        let cfg = m1();
        let mut s = state(&cfg, vec![0.0, 0.0]);
        s.t = cfg.horizon;
        assert!(matches!(
            step(&s, &HybridAction::full_speed(&cfg), &cfg),
            Err(Error::EpisodeDone { .. })
        ));
    }

    #[test]
    fn episode_rejects_step_after_done() {
        let cfg = ScenarioConfig::preset("corridor").unwrap();
        let mut ep = Episode::new(cfg.clone(), TeamState::initial(&cfg)).unwrap();
        let a = HybridAction::full_speed(&cfg);
        while !ep.is_done() {
            ep.step(&a).unwrap();
        }
        assert_eq!(ep.state().t, 10);
        assert!(matches!(ep.step(&a), Err(Error::EpisodeDone { .. })));
    }

    #[test]
    fn shaping_examples() {
        let mut cfg = m1();
        cfg.shaping_c = 1.0;
        cfg.terminal_q = 0.0;
        let prev = state(&cfg, vec![0.0, 0.0]);
        let next = state(&cfg, vec![3.0, 0.0]);
        assert!((shaping_bonus(&prev, &next, &cfg) - 2.985).abs() < 1e-12);

        let idle = state(&cfg, vec![10.0, 20.0]);
        let f = shaping_bonus(&idle, &idle, &cfg);
        assert!((f - (cfg.gamma - 1.0) * 30.0).abs() < 1e-12);
        assert!(f < 0.0);
    }

    #[test]
    fn terminal_bonus_paid_once() {
        let cfg = m1();
        let prev = state(&cfg, vec![69.0, 70.0]);
        let next = state(&cfg, vec![70.0, 70.0]);
        let first = shaping_bonus(&prev, &next, &cfg);
        let again = shaping_bonus(&next, &next, &cfg);
        let progress = cfg.shaping_c * (cfg.gamma * 140.0 - 139.0);
        assert!((first - (cfg.terminal_q + progress)).abs() < 1e-12);
        assert!(again < cfg.terminal_q / 2.0);
    }

    #[test]
    fn shaping_is_potential_difference() {
        let cfg = m1();
        let prev = state(&cfg, vec![12.0, 68.0]);
        for next_pos in [vec![15.0, 70.0], vec![70.0, 70.0], vec![12.0, 69.0]] {
            let next = state(&cfg, next_pos);
            let f = shaping_bonus(&prev, &next, &cfg);
            let phi = cfg.gamma * shaping_potential(&next, &cfg) - shaping_potential(&prev, &cfg);
            assert!((f - phi).abs() < 1e-9);
        }
    }

    #[test]
    fn relocation() {
        let cfg = m1();
        let s = state(&cfg, vec![10.0, 20.0]);
        assert_eq!(relocate_adversary(&s, 0, 35.0, &cfg).unwrap(), s);
        let moved = relocate_adversary(&s, 0, 39.0, &cfg).unwrap();
        assert_eq!(moved.positions, s.positions);
        let adv = &cfg.adversaries[0];
        assert_eq!(unit_risk(35.0, moved.adversaries[0], adv, &cfg), 2.0);
        assert_eq!(cfg.zone(0, moved.adversaries[0]), (33.0, 45.0));
        assert!(matches!(
            relocate_adversary(&s, 0, 50.0, &cfg),
            Err(Error::NotInSupport { .. })
        ));
    }
}
