//! Validation of every file the harness emits. Text files are keyed by
//! their versioned first line; policy checkpoints by their magic bytes.

use std::path::Path;

use crate::config::{ScenarioConfig, SCENARIO_HEADER};
use crate::error::{Error, Result};
use crate::harness::log::{log_dims, parse_with_dims, TRAJECTORY_HEADER};
use crate::harness::plot::{
    GUARDS_COLUMNS, GUARDS_HEADER, ROBOTS_COLUMNS, ROBOTS_HEADER, ZONES_COLUMNS, ZONES_HEADER,
};
use crate::harness::table::{
    COMPARISON_COLUMNS, COMPARISON_HEADER, COMPARISON_TEXT_HEADER, TIMINGS_HEADER,
};
use crate::ppo::policy::read_policy;
use crate::ppo::train::{read_curve, TrainConfig, CURVE_HEADER, TRAIN_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Scenario,
    TrainConfig,
    Policy,
    Trajectory,
    Curve,
    Comparison,
    ComparisonText,
    Timings,
    PlotRobots,
    PlotGuards,
    PlotZones,
}

/// Which numeric rule applies to a column.
#[derive(Clone, Copy)]
enum Cell {
    Text,
    Count,
    Real,
    /// Real, or empty.
    OptReal,
    /// Count, or empty.
    OptCount,
    /// Real, or `N/A`.
    RealOrNa,
}

fn check_cell(cell: &str, rule: Cell) -> bool {
    let real = |s: &str| s.parse::<f64>().is_ok_and(f64::is_finite);
    let count = |s: &str| s.parse::<usize>().is_ok();
    match rule {
        Cell::Text => true,
        Cell::Count => count(cell),
        Cell::Real => real(cell),
        Cell::OptReal => cell.is_empty() || real(cell),
        Cell::OptCount => cell.is_empty() || count(cell),
        Cell::RealOrNa => cell == "N/A" || real(cell),
    }
}

fn check_csv(path: &Path, body: &str, columns: &[&str], rules: &[Cell]) -> Result<()> {
    let bad = |reason: String| Error::format(path, reason);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(columns.iter().copied()) {
        return Err(bad(format!("expected columns {columns:?}")));
    }
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        for (c, (cell, rule)) in rec.iter().zip(rules).enumerate() {
            if !check_cell(cell, *rule) {
                return Err(bad(format!(
                    "data row {}: column {} has invalid value '{cell}'",
                    k + 1,
                    columns[c]
                )));
            }
        }
    }
    Ok(())
}

/// Checks `path` against the schema named by its header line.
pub fn validate_file(path: &Path) -> Result<FileKind> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"OWPP") {
        read_policy(path)?;
        return Ok(FileKind::Policy);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    let first = text.lines().next().unwrap_or_default().trim_end();
    let body = text
        .split_once('\n')
        .map(|(_, rest)| rest)
        .unwrap_or_default();
    use Cell::*;
    let kind = match first {
        SCENARIO_HEADER => {
            ScenarioConfig::parse(&text, path)?;
            FileKind::Scenario
        }
        TRAIN_HEADER => {
            TrainConfig::parse(&text, path)?;
            FileKind::TrainConfig
        }
        TRAJECTORY_HEADER => {
            let (n, m) = log_dims(&text)?;
            if n == 0 {
                return Err(Error::format(path, "trajectory log has no robot columns"));
            }
            parse_with_dims(&text, n, m).map_err(|e| Error::format(path, e.to_string()))?;
            FileKind::Trajectory
        }
        CURVE_HEADER => {
            read_curve(path)?;
            FileKind::Curve
        }
        COMPARISON_HEADER => {
            let rules = [Text, Text, RealOrNa, RealOrNa, Count, RealOrNa, Text];
            check_csv(path, body, &COMPARISON_COLUMNS, &rules)?;
            FileKind::Comparison
        }
        COMPARISON_TEXT_HEADER => {
            let cols: Vec<&str> = body
                .lines()
                .next()
                .unwrap_or_default()
                .split_whitespace()
                .collect();
            if cols != COMPARISON_COLUMNS {
                return Err(Error::format(path, "unexpected comparison table columns"));
            }
            FileKind::ComparisonText
        }
        TIMINGS_HEADER => {
            check_csv(
                path,
                body,
                &["scenario", "method", "wall_clock_seconds"],
                &[Text, Text, Real],
            )?;
            FileKind::Timings
        }
        ROBOTS_HEADER => {
            check_csv(
                path,
                body,
                &ROBOTS_COLUMNS,
                &[Count, Count, Real, OptReal, OptCount],
            )?;
            FileKind::PlotRobots
        }
        GUARDS_HEADER => {
            check_csv(
                path,
                body,
                &GUARDS_COLUMNS,
                &[Count, Count, Count, Real, Real, Real],
            )?;
            FileKind::PlotGuards
        }
        ZONES_HEADER => {
            check_csv(
                path,
                body,
                &ZONES_COLUMNS,
                &[Count, Count, Count, Real, Real, Real, Real],
            )?;
            FileKind::PlotZones
        }
        other => {
            return Err(Error::format(
                path,
                format!("unknown format header '{other}'"),
            ));
        }
    };
    Ok(kind)
}
