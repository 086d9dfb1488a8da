use std::path::Path;

use overwatch_core::env::{self, HybridAction, TeamState};
use overwatch_core::harness::*;
use overwatch_core::ppo::{CurvePoint, TrainConfig};
use overwatch_core::solvers::overwatch_heuristic;
use overwatch_core::trajectory::{run_episode, Relocation, Trajectory};
use overwatch_core::{Error, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn m1_small() -> ScenarioConfig {
    ScenarioConfig::preset("m1-small").unwrap()
}

fn heuristic_episode(cfg: &ScenarioConfig) -> Trajectory {
    run_episode(cfg, TeamState::initial(cfg), &[], |s| {
        overwatch_heuristic(s, cfg)
    })
    .unwrap()
}

fn random_episode(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Trajectory {
    let start = TeamState::sample(cfg, rng);
    let mut relocations = Vec::new();
    if cfg.n_adversaries() > 0 && rng.random_bool(0.3) {
        let j = rng.random_range(0..cfg.n_adversaries());
        let support = &cfg.adversaries[j].support;
        relocations.push(Relocation {
            step: rng.random_range(0..10),
            adversary: j,
            position: support[rng.random_range(0..support.len())],
        });
    }
    let continuous = rng.random_bool(0.5);
    let m = cfg.n_adversaries().max(1);
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    run_episode(cfg, start, &relocations, |_| {
        let speeds = (0..cfg.n_robots)
            .map(|_| {
                if continuous {
                    local.random_range(0.0..=cfg.v_max)
                } else {
                    local.random_range(0..=cfg.v_max as usize) as f64
                }
            })
            .collect();
        let guards = (0..cfg.n_robots)
            .map(|_| local.random_range(0..m))
            .collect();
        Ok(HybridAction::new(speeds, guards))
    })
    .unwrap()
}

#[test]
fn logged_episodes_replay_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scenarios = ["m1", "m2", "m3", "m1-small", "corridor"];
    for k in 0..40 {
        let cfg = ScenarioConfig::preset(scenarios[k % scenarios.len()]).unwrap();
        let traj = random_episode(&cfg, &mut rng);
        let text = format_trajectory(&traj, &cfg).unwrap();
        let rows = parse_trajectory_log(&text, &cfg).unwrap();
        assert_eq!(rows.len(), traj.len() + 1);
        let report = replay(&rows, &cfg).unwrap();
        assert!(report.is_exact(), "{:?}", report.mismatches);
        assert_eq!(report.steps, traj.len());
        // A log starts from the state the first action saw, and relocating
        // onto the current position leaves no trace.
        let effective: Vec<Relocation> = traj
            .relocations
            .iter()
            .filter(|r| r.step > 0 && r.position != start_adv(&traj, r))
            .copied()
            .collect();
        assert_eq!(report.relocations, effective);
        let rebuilt = trajectory_from_log(&rows, &cfg).unwrap();
        assert_eq!(rebuilt.transitions, traj.transitions);
    }
}

/// Adversary position just before relocation `r` was applied.
fn start_adv(traj: &Trajectory, r: &Relocation) -> f64 {
    traj.transitions[r.step - 1].outcome.next_state.adversaries[r.adversary]
}

#[test]
fn tampered_logs_do_not_replay() {
    let cfg = m1_small();
    let traj = heuristic_episode(&cfg);
    let text = format_trajectory(&traj, &cfg).unwrap();
    let mut rows = parse_trajectory_log(&text, &cfg).unwrap();
    let step = rows[2].step.as_mut().unwrap();
    step.raw_reward = f64::from_bits(step.raw_reward.to_bits() + 1);
    let report = replay(&rows, &cfg).unwrap();
    assert_eq!(report.mismatches.len(), 1);
    assert!(trajectory_from_log(&rows, &cfg).is_err());
}

#[test]
fn malformed_logs_are_rejected() {
    let cfg = m1_small();
    let text = format_trajectory(&heuristic_episode(&cfg), &cfg).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let without_terminal = lines[..lines.len() - 1].join("\n") + "\n";
    let bad_guard = text.replacen(",1,1,", ",1,7,", 1);
    let cases = [
        text.replacen("# format: overwatch-trajectory/1", "# format: other/1", 1),
        text.replacen("pos_1", "position_1", 1),
        without_terminal,
        bad_guard,
        text.replacen(",0,0,", ",x,0,", 1),
    ];
    for (k, bad) in cases.iter().enumerate() {
        assert_ne!(bad, &text, "case {k} did not change the log");
        let err = parse_trajectory_log(bad, &cfg).unwrap_err();
        assert!(matches!(err, Error::MalformedLog(_)), "case {k}: {err:?}");
    }
    let other = ScenarioConfig::preset("m2").unwrap();
    assert!(parse_trajectory_log(&text, &other).is_err());
}

#[test]
fn detector_accepts_the_heuristic_and_rejects_a_rush() {
    let cfg = m1_small();
    let report = detect_overwatch(&heuristic_episode(&cfg), &cfg);
    assert!(report.overwatch_detected, "{report:?}");
    assert!(report.all_arrived);
    assert_eq!(report.guard_at_boundary_fraction, 1.0);

    let rush = run_episode(&cfg, TeamState::initial(&cfg), &[], |_| {
        Ok(HybridAction::full_speed(&cfg))
    })
    .unwrap();
    let report = detect_overwatch(&rush, &cfg);
    assert!(!report.overwatch_detected);
    assert_eq!(report.guard_at_boundary_fraction, 0.0);
    assert_eq!(report.intermediate_speed_steps, 0);
    assert!(report.exposed_steps > 0);
}

#[test]
fn detector_counts_intermediate_speeds_and_early_departures() {
    let cfg = m1_small();
    // Zone is [3, 9]. Robot 2 guards from 3 while robot 1 crosses, then
    // leaves while robot 1 is still inside.
    let script = [
        (vec![3.0, 3.0], vec![0, 0]),
        (vec![3.0, 0.0], vec![0, 0]),
        (vec![1.5, 3.0], vec![0, 0]),
        (vec![3.0, 3.0], vec![0, 0]),
        (vec![3.0, 3.0], vec![0, 0]),
        (vec![3.0, 3.0], vec![0, 0]),
    ];
    let mut k = 0;
    let traj = run_episode(&cfg, TeamState::initial(&cfg), &[], |_| {
        let (v, g) = script[k.min(script.len() - 1)].clone();
        k += 1;
        Ok(HybridAction::new(v, g))
    })
    .unwrap();
    let report = detect_overwatch(&traj, &cfg);
    assert_eq!(report.intermediate_speed_steps, 1);
    assert_eq!(report.guard_early_departures, 1);
    assert!(!report.overwatch_detected);
}

#[test]
fn plot_export_of_an_empty_episode_is_headers_only() {
    let cfg = m1_small();
    let start = TeamState {
        positions: vec![cfg.route_length; 2],
        adversaries: cfg.default_placement(),
        t: 0,
    };
    let traj = run_episode(&cfg, start, &[], |_| unreachable!()).unwrap();
    assert!(traj.is_empty());
    let dir = tempfile::tempdir().unwrap();
    for path in export_plotdata(&traj, &cfg, dir.path()).unwrap() {
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2, "{}", path.display());
        validate_file(&path).unwrap();
    }
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body = text.split_once('\n').unwrap().1;
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn plot_export_replays_and_matches_zones() {
    let cfg = ScenarioConfig::preset("m1").unwrap();
    let relocation = [Relocation {
        step: 4,
        adversary: 0,
        position: 38.0,
    }];
    let traj = run_episode(
        &cfg,
        TeamState::new(&cfg, vec![32.0]).unwrap(),
        &relocation,
        |s| {
            Ok(if s.positions[0] < 20.0 {
                HybridAction::new(vec![3.0, 2.0], vec![0, 0])
            } else {
                HybridAction::new(vec![1.0, 3.0], vec![0, 0])
            })
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = export_plotdata(&traj, &cfg, dir.path()).unwrap();
    for p in &paths {
        validate_file(p).unwrap();
    }

    let zones = read_rows(&paths[2]);
    assert_eq!(zones.len(), 2);
    for (row, z) in zones.iter().zip([32.0, 38.0]) {
        let (lo, hi) = cfg.zone(0, z);
        assert_eq!(row[3].parse::<f64>().unwrap(), z);
        assert_eq!(row[4].parse::<f64>().unwrap(), lo);
        assert_eq!(row[5].parse::<f64>().unwrap(), hi);
        assert_eq!(
            row[6].parse::<f64>().unwrap(),
            cfg.adversaries[0].risk.peak()
        );
    }
    assert_eq!(zones[0][2], "4");
    assert_eq!(zones[1][1], "4");

    // Re-drive the environment from the exported series and compare with
    // the rewards recorded in the trajectory log.
    let log_path = dir.path().join("trajectory.csv");
    write_trajectory(&log_path, &traj, &cfg).unwrap();
    let logged = read_trajectory_log(&log_path, &cfg).unwrap();
    let robots = read_rows(&paths[0]);
    let mut state = traj.initial.clone();
    for (t, chunk) in robots.chunks(2).enumerate() {
        for (i, row) in chunk.iter().enumerate() {
            assert_eq!(row[2].parse::<f64>().unwrap(), state.positions[i]);
        }
        if chunk[0][3].is_empty() {
            assert_eq!(t, traj.len());
            break;
        }
        if let Some(r) = relocation.iter().find(|r| r.step == t) {
            state = env::relocate_adversary(&state, r.adversary, r.position, &cfg).unwrap();
        }
        let speeds = chunk.iter().map(|r| r[3].parse().unwrap()).collect();
        let guards = chunk
            .iter()
            .map(|r| r[4].parse::<usize>().unwrap() - 1)
            .collect();
        let out = env::step(&state, &HybridAction::new(speeds, guards), &cfg).unwrap();
        let step = logged[t].step.as_ref().unwrap();
        assert_eq!(out.raw_reward.to_bits(), step.raw_reward.to_bits());
        assert_eq!(out.shaped_reward.to_bits(), step.shaped_reward.to_bits());
        state = out.next_state;
    }
}

fn spec(scenario: &str, method: Method, out: &Path) -> ExperimentSpec {
    ExperimentSpec {
        cache_dir: None,
        ..ExperimentSpec::new(scenario, method, out)
    }
}

#[test]
fn oracle_experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec("m1-small", Method::Oracle, dir.path());
    s.seeds = vec![1, 2, 3];
    s.placement = Placement::Fixed(vec![6.0]);
    let res = run_experiment(&s).unwrap();
    assert_eq!(res.row.seeds, 1);
    assert_eq!(res.row.std_return, Some(0.0));
    assert!((res.row.mean_return.unwrap() + 1.92).abs() < 1e-9);
    assert_eq!(
        validate_file(&res.runs[0].log_path).unwrap(),
        FileKind::Trajectory
    );
}

#[test]
fn greedy_is_worse_than_oracle_on_fixed_m1() {
    let dir = tempfile::tempdir().unwrap();
    let mut returns = Vec::new();
    for method in [Method::Oracle, Method::Greedy] {
        let mut s = spec("m1", method, dir.path());
        s.placement = Placement::Fixed(vec![33.0]);
        returns.push(run_experiment(&s).unwrap().row.mean_return.unwrap());
    }
    assert!(returns[1] < returns[0], "{returns:?}");
}

#[test]
fn oracle_follows_a_relocated_adversary() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec("m1-small", Method::Oracle, dir.path());
    s.placement = Placement::Relocate {
        initial: vec![5.0],
        step: 1,
        adversary: 0,
        position: 7.0,
    };
    let res = run_experiment(&s).unwrap();
    let traj = &res.runs[0].trajectory;
    assert!(traj.all_arrived(&m1_small()));
    assert_eq!(traj.relocations.len(), 1);
    assert!(traj.transitions[1..]
        .iter()
        .all(|t| t.state.adversaries == vec![7.0]));
}

#[test]
fn experiment_inputs_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec("m1-small", Method::Greedy, dir.path());
    s.placement = Placement::Fixed(vec![2.0]);
    assert!(matches!(
        run_experiment(&s),
        Err(Error::NotInSupport { .. })
    ));
    s.placement = Placement::Relocate {
        initial: vec![6.0],
        step: 500,
        adversary: 0,
        position: 5.0,
    };
    assert!(matches!(run_experiment(&s), Err(Error::InvalidConfig(_))));
    let mut s = spec("m1-small", Method::DPpo, dir.path());
    s.checkpoint = Some(dir.path().join("nope.bin"));
    assert!(matches!(
        run_experiment(&s),
        Err(Error::MissingCheckpoint(_))
    ));
    assert!("bonmin".parse::<Method>().is_err());
    assert_eq!("H-PPO".parse::<Method>().unwrap(), Method::HPpo);
}

#[test]
fn comparison_marks_failures_and_orders_methods() {
    let dir = tempfile::tempdir().unwrap();
    let base = spec("m1-small", Method::Oracle, dir.path());
    let table = compare_methods(
        &base,
        &[Method::Oracle, Method::Overwatch, Method::Greedy],
        None,
    )
    .unwrap();
    assert_eq!(table.rows.len(), 3);
    let r = |m| table.row(m).unwrap().mean_return.unwrap();
    assert!(r(Method::Oracle) >= r(Method::Overwatch));
    assert!(r(Method::Overwatch) > r(Method::Greedy));
    for p in [&table.text_path, &table.csv_path, &table.timings_path] {
        validate_file(p).unwrap();
    }

    let single = compare_methods(
        &spec("m1-small", Method::Oracle, dir.path()),
        &[Method::Greedy],
        None,
    )
    .unwrap();
    assert_eq!(single.rows.len(), 1);

    let m3 = compare_methods(
        &spec("m3", Method::Oracle, &dir.path().join("m3")),
        &[Method::Overwatch, Method::Greedy],
        None,
    )
    .unwrap();
    assert_eq!(m3.rows[0].mean_return, None);
    assert!(m3.rows[0].note.contains("heuristic"));
    assert!(m3.rows[1].mean_return.is_some());
    let csv = std::fs::read_to_string(&m3.csv_path).unwrap();
    assert!(csv.lines().nth(2).unwrap().contains("N/A"));
    validate_file(&m3.csv_path).unwrap();
}

#[test]
fn comparison_tables_are_reproducible() {
    let run = |dir: &Path| {
        let mut base = spec("m1-small", Method::Oracle, dir);
        base.seeds = vec![0, 1];
        base.train = TrainConfig {
            hidden: vec![16, 16],
            rollout_steps: 256,
            minibatch_size: 64,
            epochs: 2,
            total_steps: 512,
            ..TrainConfig::default()
        };
        compare_methods(&base, &[Method::Oracle, Method::DPpo, Method::HPpo], None).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ta = run(a.path());
    let tb = run(b.path());
    for (x, y) in [(&ta.text_path, &tb.text_path), (&ta.csv_path, &tb.csv_path)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(ta.row(Method::DPpo).unwrap().seeds, 2);
    let curve = a.path().join("d-ppo/seed-1/curve.csv");
    assert_eq!(validate_file(&curve).unwrap(), FileKind::Curve);
}

#[test]
fn unknown_or_broken_files_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    std::fs::write(&p, "# format: mystery/1\na,b\n").unwrap();
    assert!(validate_file(&p).is_err());
    std::fs::write(
        &p,
        "# format: overwatch-timings/1\nscenario,method,wall_clock_seconds\nm1,oracle,fast\n",
    )
    .unwrap();
    assert!(validate_file(&p).is_err());
}

#[test]
fn convergence_point_is_first_within_five_percent() {
    let point = |episodes, mean_return| CurvePoint {
        iteration: 0,
        steps: 0,
        episodes,
        mean_return,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_fraction: 0.0,
    };
    let curve = vec![
        point(10, -20.0),
        point(20, -10.4),
        point(30, -10.0),
        point(40, -10.0),
    ];
    assert_eq!(episodes_to_converge(&curve), Some(20));
    assert_eq!(episodes_to_converge(&[]), None);
}
