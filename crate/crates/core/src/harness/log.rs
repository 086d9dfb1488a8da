//! Trajectory logs: one CSV row per step plus a terminal row.
//!
//! ```text
//! # format: overwatch-trajectory/1
//! t,pos_1,..,pos_n,adv_1,..,adv_m,speed_1,..,speed_n,guard_1,..,guard_n,risk_1,..,risk_n,penalty_1,..,penalty_n,raw_reward,shaped_reward
//! ```
//!
//! Positions and adversaries are the state the action was taken in. Guards
//! are 1-based (0 when the scenario has no adversaries). The terminal row
//! carries the final state and leaves the action and reward fields empty.
//! Floats use the shortest representation that parses back bit-exactly.

use std::path::Path;

use crate::config::ScenarioConfig;
use crate::env::{self, HybridAction, StepOutcome, TeamState};
use crate::error::{Error, Result};
use crate::trajectory::{Relocation, Trajectory, Transition};

pub const TRAJECTORY_HEADER: &str = "# format: overwatch-trajectory/1";

pub fn trajectory_columns(n: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let groups = [
        ("pos", n),
        ("adv", m),
        ("speed", n),
        ("guard", n),
        ("risk", n),
        ("penalty", n),
    ];
    for (name, k) in groups {
        cols.extend((1..=k).map(|i| format!("{name}_{i}")));
    }
    cols.push("raw_reward".into());
    cols.push("shaped_reward".into());
    cols
}

pub fn format_trajectory(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<String> {
    let n = cfg.n_robots;
    let m = cfg.n_adversaries();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(trajectory_columns(n, m))?;
        let state_fields = |s: &TeamState| -> Vec<String> {
            let mut f = vec![s.t.to_string()];
            f.extend(s.positions.iter().map(|x| x.to_string()));
            f.extend(s.adversaries.iter().map(|x| x.to_string()));
            f
        };
        for tr in &traj.transitions {
            let mut f = state_fields(&tr.state);
            f.extend(tr.action.speeds.iter().map(|x| x.to_string()));
            f.extend(
                tr.action
                    .guards
                    .iter()
                    .map(|&g| if m == 0 { 0 } else { g + 1 }.to_string()),
            );
            f.extend(tr.outcome.risk.iter().map(|x| x.to_string()));
            f.extend(tr.outcome.penalty.iter().map(|x| x.to_string()));
            f.push(tr.outcome.raw_reward.to_string());
            f.push(tr.outcome.shaped_reward.to_string());
            w.write_record(&f)?;
        }
        let mut f = state_fields(traj.final_state());
        f.resize(3 + 5 * n + m, String::new());
        w.write_record(&f)?;
        w.flush()?;
    }
    let body = String::from_utf8(buf).expect("csv output is UTF-8");
    Ok(format!("{TRAJECTORY_HEADER}\n{body}"))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, cfg: &ScenarioConfig) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, format_trajectory(traj, cfg)?)?;
    Ok(())
}

/// One parsed log row: the state, and for non-terminal rows the logged
/// action and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub state: TeamState,
    pub step: Option<LoggedStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedStep {
    pub action: HybridAction,
    pub risk: Vec<f64>,
    pub penalty: Vec<f64>,
    pub raw_reward: f64,
    pub shaped_reward: f64,
}

fn malformed(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::MalformedLog(format!("line {line}: {msg}"))
}

/// Parses and structurally validates a trajectory log against `cfg`:
/// header, column names, numeric fields, guard range, consecutive times,
/// and exactly one terminal row at the end.
pub fn parse_trajectory_log(text: &str, cfg: &ScenarioConfig) -> Result<Vec<LogRow>> {
    parse_with_dims(text, cfg.n_robots, cfg.n_adversaries())
}

/// Robot and adversary counts implied by a log's column names.
pub fn log_dims(text: &str) -> Result<(usize, usize)> {
    let header = text
        .lines()
        .nth(1)
        .ok_or_else(|| malformed(2, "missing column header"))?;
    let count = |prefix: &str| header.split(',').filter(|c| c.starts_with(prefix)).count();
    Ok((count("pos_"), count("adv_")))
}

pub(crate) fn parse_with_dims(text: &str, n: usize, m: usize) -> Result<Vec<LogRow>> {
    let body = text
        .strip_prefix(TRAJECTORY_HEADER)
        .and_then(|b| b.strip_prefix('\n').or_else(|| b.strip_prefix("\r\n")))
        .ok_or_else(|| malformed(1, format!("expected header '{TRAJECTORY_HEADER}'")))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let expected = trajectory_columns(n, m);
    let header = r.headers().map_err(|e| malformed(2, e))?.clone();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(malformed(
            2,
            format!("columns do not match a {n}-robot, {m}-adversary scenario"),
        ));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 3;
        let rec = rec.map_err(|e| malformed(line, e))?;
        if rows.last().is_some_and(|row: &LogRow| row.step.is_none()) {
            return Err(malformed(line, "row after the terminal row"));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i].parse().map_err(|_| {
                malformed(
                    line,
                    format!("column {} is not a number: '{}'", expected[i], &rec[i]),
                )
            })?;
            if !v.is_finite() {
                return Err(malformed(
                    line,
                    format!("column {} is not finite", expected[i]),
                ));
            }
            Ok(v)
        };
        let t: usize = rec[0]
            .parse()
            .map_err(|_| malformed(line, format!("bad time '{}'", &rec[0])))?;
        if t != rows.len() {
            return Err(malformed(
                line,
                format!("expected t = {}, got {t}", rows.len()),
            ));
        }
        let positions = (1..=n).map(&num).collect::<Result<Vec<_>>>()?;
        let adversaries = (1 + n..1 + n + m).map(&num).collect::<Result<Vec<_>>>()?;
        let state = TeamState {
            positions,
            adversaries,
            t,
        };
        let action_start = 1 + n + m;
        let terminal = rec.iter().skip(action_start).all(str::is_empty);
        if terminal {
            rows.push(LogRow { state, step: None });
            continue;
        }
        let speeds = (action_start..action_start + n)
            .map(&num)
            .collect::<Result<Vec<_>>>()?;
        let mut guards = Vec::with_capacity(n);
        for i in action_start + n..action_start + 2 * n {
            let g: usize = rec[i]
                .parse()
                .map_err(|_| malformed(line, format!("bad guard '{}'", &rec[i])))?;
            let g = if m == 0 {
                if g != 0 {
                    return Err(malformed(line, "guard must be 0 without adversaries"));
                }
                0
            } else {
                if g == 0 || g > m {
                    return Err(malformed(line, format!("guard {g} outside 1..={m}")));
                }
                g - 1
            };
            guards.push(g);
        }
        let base = action_start + 2 * n;
        let risk = (base..base + n).map(&num).collect::<Result<Vec<_>>>()?;
        let penalty = (base + n..base + 2 * n)
            .map(&num)
            .collect::<Result<Vec<_>>>()?;
        rows.push(LogRow {
            state,
            step: Some(LoggedStep {
                action: HybridAction::new(speeds, guards),
                risk,
                penalty,
                raw_reward: num(base + 2 * n)?,
                shaped_reward: num(base + 2 * n + 1)?,
            }),
        });
    }
    match rows.last() {
        Some(row) if row.step.is_none() => Ok(rows),
        _ => Err(Error::MalformedLog("log has no terminal row".into())),
    }
}

pub fn read_trajectory_log(path: &Path, cfg: &ScenarioConfig) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectory_log(&text, cfg)
}

/// Outcome of re-simulating a log through the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    pub relocations: Vec<Relocation>,
    /// Human-readable descriptions of every field that differed.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Steps the environment with the logged actions and compares every
/// logged position, cost and reward bit for bit. Adversary moves between
/// rows are replayed as relocations.
pub fn replay(rows: &[LogRow], cfg: &ScenarioConfig) -> Result<ReplayReport> {
    let first = rows
        .first()
        .ok_or_else(|| Error::MalformedLog("empty log".into()))?;
    first.state.validate(cfg)?;
    let mut state = first.state.clone();
    let mut report = ReplayReport {
        steps: 0,
        relocations: Vec::new(),
        mismatches: Vec::new(),
    };
    for (k, row) in rows.iter().enumerate() {
        for (j, &logged) in row.state.adversaries.iter().enumerate() {
            if logged.to_bits() != state.adversaries[j].to_bits() {
                state = env::relocate_adversary(&state, j, logged, cfg)?;
                report.relocations.push(Relocation {
                    step: k,
                    adversary: j,
                    position: logged,
                });
            }
        }
        if !same_bits(&row.state.positions, &state.positions) || row.state.t != state.t {
            report.mismatches.push(format!(
                "t={k}: logged positions {:?}, replayed {:?}",
                row.state.positions, state.positions
            ));
        }
        let Some(step) = &row.step else { break };
        let out = env::step(&state, &step.action, cfg)?;
        let checks: [(&str, bool); 4] = [
            ("risk", same_bits(&step.risk, &out.risk)),
            ("penalty", same_bits(&step.penalty, &out.penalty)),
            (
                "raw_reward",
                step.raw_reward.to_bits() == out.raw_reward.to_bits(),
            ),
            (
                "shaped_reward",
                step.shaped_reward.to_bits() == out.shaped_reward.to_bits(),
            ),
        ];
        for (name, ok) in checks {
            if !ok {
                report.mismatches.push(format!("t={k}: {name} differs"));
            }
        }
        report.steps += 1;
        state = out.next_state;
    }
    Ok(report)
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Rebuilds a [`Trajectory`] from a log by replaying its actions.
pub fn trajectory_from_log(rows: &[LogRow], cfg: &ScenarioConfig) -> Result<Trajectory> {
    let report = replay(rows, cfg)?;
    if !report.is_exact() {
        return Err(Error::MalformedLog(format!(
            "log does not replay: {}",
            report.mismatches.join("; ")
        )));
    }
    let mut transitions = Vec::new();
    for row in rows {
        let Some(step) = &row.step else { break };
        let outcome: StepOutcome = env::step(&row.state, &step.action, cfg)?;
        transitions.push(Transition {
            state: row.state.clone(),
            action: step.action.clone(),
            outcome,
        });
    }
    Ok(Trajectory {
        initial: rows[0].state.clone(),
        transitions,
        relocations: report.relocations,
    })
}
