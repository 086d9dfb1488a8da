use overwatch_core::env::{self, HybridAction, TeamState};
use overwatch_core::solvers::greedy::own_step_cost;
use overwatch_core::solvers::*;
use overwatch_core::trajectory::run_episode;
use overwatch_core::{AdversarySpec, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn m1_small() -> ScenarioConfig {
    ScenarioConfig::preset("m1-small").unwrap()
}

fn joint_actions(cfg: &ScenarioConfig) -> Vec<HybridAction> {
    let per_robot: Vec<(f64, usize)> = cfg
        .discrete_speeds()
        .into_iter()
        .flat_map(|v| (0..cfg.n_adversaries().max(1)).map(move |g| (v, g)))
        .collect();
    let mut out = vec![HybridAction::new(vec![], vec![])];
    for _ in 0..cfg.n_robots {
        out = out
            .into_iter()
            .flat_map(|a| {
                per_robot.iter().map(move |&(v, g)| {
                    let mut b = a.clone();
                    b.speeds.push(v);
                    b.guards.push(g);
                    b
                })
            })
            .collect();
    }
    out
}

/// Cost-to-go recomputed from env::step and the stored successor values.
fn bellman_rhs(sol: &OracleSolution, state: &TeamState, cfg: &ScenarioConfig) -> f64 {
    joint_actions(cfg)
        .iter()
        .map(|a| {
            let out = env::step(state, a, cfg).unwrap();
            let cost = -out.raw_reward * cfg.reward_scale;
            cost + sol.value(&out.next_state).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn bellman_consistency_on_every_state() {
    let cfg = m1_small();
    let inst = DiscreteInstance::new(cfg.clone(), vec![6.0]).unwrap();
    let sol = solve_exact(&inst).unwrap();
    let l = cfg.route_length as usize;
    for t in 0..cfg.horizon {
        for a in 0..=l {
            for b in a..=l {
                let state = TeamState {
                    positions: vec![a as f64, b as f64],
                    adversaries: vec![6.0],
                    t,
                };
                let v = sol.value(&state).unwrap();
                if state.all_arrived(&cfg) {
                    assert_eq!(v, 0.0);
                    continue;
                }
                let rhs = bellman_rhs(&sol, &state, &cfg);
                assert!(
                    (v - rhs).abs() <= 1e-12 * v.abs().max(1.0),
                    "({a},{b}) t={t}: {v} vs {rhs}"
                );
            }
        }
    }
}

#[test]
fn oracle_bounds_every_policy() {
    let cfg = m1_small();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &z in &cfg.adversaries[0].support {
        let inst = DiscreteInstance::new(cfg.clone(), vec![z]).unwrap();
        let sol = solve_exact(&inst).unwrap();
        let best = sol.optimal_return();
        let start = inst.initial_state();
        let mut returns = vec![
            run_episode(&cfg, start.clone(), &[], |s| greedy_baseline(s, &cfg)).unwrap(),
            run_episode(&cfg, start.clone(), &[], |s| overwatch_heuristic(s, &cfg)).unwrap(),
            run_episode(&cfg, start.clone(), &[], |_| {
                Ok(HybridAction::full_speed(&cfg))
            })
            .unwrap(),
        ];
        let actions = joint_actions(&cfg);
        for _ in 0..200 {
            let traj = run_episode(&cfg, start.clone(), &[], |_| {
                Ok(actions[rng.random_range(0..actions.len())].clone())
            })
            .unwrap();
            returns.push(traj);
        }
        for traj in &returns {
            assert!(
                traj.raw_return() <= best + 1e-12,
                "{} > {best}",
                traj.raw_return()
            );
        }
        let roll = sol.rollout().unwrap();
        assert!((roll.raw_return() - best).abs() < 1e-12);
    }
}

#[test]
fn heuristic_matches_oracle_on_m1_small() {
    let cfg = m1_small();
    let inst = DiscreteInstance::new(cfg.clone(), cfg.default_placement()).unwrap();
    let sol = solve_exact(&inst).unwrap();
    let traj = run_episode(&cfg, inst.initial_state(), &[], |s| {
        overwatch_heuristic(s, &cfg)
    })
    .unwrap();
    assert!((traj.raw_return() - sol.optimal_return()).abs() < 1e-12);
}

#[test]
fn oracle_policy_moves_one_robot_while_the_other_guards() {
    let cfg = m1_small();
    let inst = DiscreteInstance::new(cfg.clone(), cfg.default_placement()).unwrap();
    let sol = solve_exact(&inst).unwrap();
    let traj = sol.rollout().unwrap();
    let (lo, hi) = cfg.zone(0, 6.0);
    let split = traj.transitions.iter().any(|tr| {
        let s = &tr.state.positions;
        let v = &tr.action.speeds;
        (0..2).any(|i| {
            let k = 1 - i;
            s[i] > lo && s[i] < hi && v[i] == cfg.v_max && (s[k] == lo || s[k] == hi) && v[k] == 0.0
        })
    });
    assert!(split, "no move/guard split in {:?}", traj.transitions);
}

#[test]
fn greedy_matches_per_robot_enumeration() {
    let cfg = ScenarioConfig::preset("m1").unwrap().with_robots(1);
    for s in 0..=70 {
        let state = TeamState {
            positions: vec![s as f64],
            adversaries: vec![35.0],
            t: 0,
        };
        let a = greedy_baseline(&state, &cfg).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0usize);
        for v in [3.0, 2.0, 1.0, 0.0] {
            let c = own_step_cost(s as f64, v, 0, &state, &cfg);
            if c < best.0 {
                best = (c, v, 0);
            }
        }
        if s < 70 {
            assert_eq!(a.speeds[0], best.1, "s = {s}");
        }
    }
    let state = TeamState {
        positions: vec![35.0],
        adversaries: vec![35.0],
        t: 0,
    };
    assert_eq!(greedy_baseline(&state, &cfg).unwrap().speeds, vec![0.0]);
}

#[test]
fn greedy_is_strictly_worse_than_oracle_on_m1() {
    let cfg = ScenarioConfig::preset("m1").unwrap();
    let inst = DiscreteInstance::new(cfg.clone(), vec![35.0]).unwrap();
    let sol = solve_exact(&inst).unwrap();
    let g = run_episode(&cfg, inst.initial_state(), &[], |s| {
        greedy_baseline(s, &cfg)
    })
    .unwrap();
    assert!(g.raw_return() < sol.optimal_return());
}

fn triangle_area(cfg: &ScenarioConfig) -> f64 {
    match cfg.adversaries[0].risk {
        overwatch_core::RiskProfile::Triangular { peak, slope } => peak * peak / slope,
        _ => unreachable!(),
    }
}

#[test]
fn constant_speed_sweep_properties() {
    let mut cfg = ScenarioConfig::preset("m1").unwrap().with_robots(1);
    let speeds: Vec<f64> = (1..=12).map(|k| 0.25 * k as f64).collect();
    let sweep = constant_speed_sweep(&cfg, &speeds, 0.01).unwrap();
    assert!(sweep.windows(2).all(|w| w[1].1 < w[0].1));
    for &(v, j) in &sweep {
        let beta = cfg.beta;
        let closed = ((1.0 - beta) / v + beta / cfg.v_max) * triangle_area(&cfg)
            + cfg.time_penalty * cfg.route_length / v;
        assert!((j - closed).abs() / closed < 0.01, "v={v}: {j} vs {closed}");
    }
    assert!(constant_speed_sweep(&cfg, &[0.0], 0.01).is_err());

    // As beta approaches 1 the 1/v part of the risk term vanishes and only
    // the time penalty depends on speed.
    cfg.beta = 0.999_999;
    cfg.time_penalty = 0.0;
    let sweep = constant_speed_sweep(&cfg, &[0.5, 1.0, 3.0], 0.01).unwrap();
    let area = triangle_area(&cfg) / cfg.v_max;
    for (_, j) in sweep {
        assert!((j - area).abs() / area < 0.01);
    }
}

#[test]
fn random_instances_agree_with_env_rollouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let mut cfg = m1_small().with_robots(rng.random_range(1..=3));
        cfg.beta = 0.6;
        let z = rng.random_range(3..=7) as f64;
        cfg.adversaries = vec![AdversarySpec::triangular(z, vec![z], 4.0, 1.0)];
        let inst = DiscreteInstance::new(cfg.clone(), vec![z]).unwrap();
        let sol = solve_exact(&inst).unwrap();
        let roll = sol.rollout().unwrap();
        assert!((roll.raw_return() - sol.optimal_return()).abs() < 1e-12);
    }
}
