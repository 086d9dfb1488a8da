use std::path::Path;
use std::process::{Command, Output};

use overwatch_core::harness::{validate_file, FileKind};

fn overwatch(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_overwatch"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_writes_valid_logs() {
    let dir = tempfile::tempdir().unwrap();
    let o = overwatch(
        dir.path(),
        &[
            "--scenario",
            "m1",
            "simulate",
            "--method",
            "overwatch",
            "--placement",
            "35",
        ],
    );
    ok(&o);
    let log = dir.path().join("overwatch/seed-0/trajectory.csv");
    assert_eq!(validate_file(&log).unwrap(), FileKind::Trajectory);
    assert_eq!(
        validate_file(&dir.path().join("comparison.csv")).unwrap(),
        FileKind::Comparison
    );
}

#[test]
fn oracle_then_behavior_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&overwatch(
        dir.path(),
        &["--scenario", "m1-small", "oracle"],
    ));
    assert!(stdout.contains("optimal return"));
    let log = dir.path().join("oracle/trajectory.csv");

    let report = ok(&overwatch(
        dir.path(),
        &[
            "--scenario",
            "m1-small",
            "check-behavior",
            log.to_str().unwrap(),
        ],
    ));
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["all_arrived"], true);
    assert!(json["replayed_steps"].as_u64().unwrap() > 0);

    let plots = dir.path().join("plots");
    let o = Command::new(env!("CARGO_BIN_EXE_overwatch"))
        .args(["--scenario", "m1-small", "--out"])
        .arg(&plots)
        .arg("export-plots")
        .arg(&log)
        .output()
        .unwrap();
    ok(&o);
    for (name, kind) in [
        ("robots.csv", FileKind::PlotRobots),
        ("guards.csv", FileKind::PlotGuards),
        ("zones.csv", FileKind::PlotZones),
    ] {
        assert_eq!(validate_file(&plots.join(name)).unwrap(), kind);
    }
}

#[test]
fn behavior_check_adapts_robot_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&overwatch(
        dir.path(),
        &[
            "--robots",
            "3",
            "simulate",
            "--method",
            "greedy",
            "--placement",
            "33",
        ],
    ));
    let log = dir.path().join("greedy/seed-0/trajectory.csv");
    let report = ok(&overwatch(
        dir.path(),
        &["check-behavior", log.to_str().unwrap()],
    ));
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["overwatch_detected"], false);
}

#[test]
fn tampered_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(&overwatch(
        dir.path(),
        &["--scenario", "m1-small", "oracle"],
    ));
    let log = dir.path().join("oracle/trajectory.csv");
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row: Vec<&str> = lines[2].split(',').collect();
    let last = row.len() - 1;
    let mut tampered: Vec<String> = row.iter().map(|s| s.to_string()).collect();
    tampered[last] = "123.5".into();
    lines[2] = tampered.join(",");
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    let o = overwatch(
        dir.path(),
        &[
            "--scenario",
            "m1-small",
            "check-behavior",
            log.to_str().unwrap(),
        ],
    );
    assert!(!o.status.success());
}

#[test]
fn compare_emits_all_table_files() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&overwatch(
        dir.path(),
        &[
            "--scenario",
            "m1-small",
            "compare",
            "--methods",
            "oracle,greedy,overwatch",
            "--seeds",
            "0,1",
        ],
    ));
    assert!(stdout.contains("oracle") && stdout.contains("greedy"));
    for (name, kind) in [
        ("comparison.txt", FileKind::ComparisonText),
        ("comparison.csv", FileKind::Comparison),
        ("timings.csv", FileKind::Timings),
    ] {
        assert_eq!(validate_file(&dir.path().join(name)).unwrap(), kind);
    }
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn train_then_evaluate_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "# overwatch-train v1\ntotal_steps = 512\nrollout_steps = 256\nminibatch_size = 64\n\
         epochs = 2\nhidden = [8]\nseeds = 2\n",
    )
    .unwrap();
    let runs = dir.path().join("runs");
    ok(&overwatch(
        &runs,
        &[
            "--scenario",
            "m1-small",
            "train",
            "--method",
            "h-ppo",
            "--config",
            cfg.to_str().unwrap(),
        ],
    ));
    for s in 0..2 {
        let seed_dir = runs.join(format!("h-ppo/seed-{s}"));
        assert_eq!(
            validate_file(&seed_dir.join("policy.bin")).unwrap(),
            FileKind::Policy
        );
        assert_eq!(
            validate_file(&seed_dir.join("curve.csv")).unwrap(),
            FileKind::Curve
        );
    }
    assert_eq!(
        validate_file(&runs.join("train.toml")).unwrap(),
        FileKind::TrainConfig
    );

    let eval = dir.path().join("eval");
    let stdout = ok(&overwatch(
        &eval,
        &[
            "--scenario",
            "m1-small",
            "evaluate",
            "--checkpoint",
            runs.join("h-ppo").to_str().unwrap(),
            "--seeds",
            "0,1",
            "--placement",
            "5",
        ],
    ));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("seed")).count(), 2);
    assert!(eval.join("h-ppo/seed-1/trajectory.csv").exists());
}

#[test]
fn bad_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["--scenario", "nowhere", "oracle"],
        &["simulate", "--method", "d-ppo"],
        &["simulate", "--placement", "3"],
        &["evaluate", "--checkpoint", "/definitely/missing.bin"],
    ];
    for args in cases {
        let o = overwatch(dir.path(), args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
    }
}
