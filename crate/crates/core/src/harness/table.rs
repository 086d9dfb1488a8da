use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::experiment::{
    run_experiment, ComparisonRow, ExperimentSpec, Method, Placement,
};

pub const COMPARISON_HEADER: &str = "# format: overwatch-comparison/1";
pub const COMPARISON_TEXT_HEADER: &str = "# format: overwatch-comparison-text/1";
pub const TIMINGS_HEADER: &str = "# format: overwatch-timings/1";
pub const COMPARISON_COLUMNS: [&str; 7] = [
    "scenario",
    "method",
    "mean_return",
    "std_return",
    "seeds",
    "episodes_to_converge",
    "note",
];

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub text_path: PathBuf,
    pub csv_path: PathBuf,
    pub timings_path: PathBuf,
}

impl ComparisonTable {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) => format!("{v:.digits$}"),
        None => "N/A".into(),
    }
}

fn cells(row: &ComparisonRow) -> [String; 7] {
    [
        row.scenario.clone(),
        row.method.name().to_string(),
        fmt_opt(row.mean_return, 4),
        fmt_opt(row.std_return, 4),
        row.seeds.to_string(),
        fmt_opt(row.episodes_to_converge, 1),
        row.note.clone(),
    ]
}

/// Column-aligned plain-text rendering.
pub fn format_text(rows: &[ComparisonRow]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(cells).collect();
    let mut widths = COMPARISON_COLUMNS.map(str::len);
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |fields: Vec<&str>| -> String {
        let parts: Vec<String> = fields
            .iter()
            .zip(widths)
            .map(|(f, w)| format!("{f:<w$}"))
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = format!("{COMPARISON_TEXT_HEADER}\n");
    out += &line(COMPARISON_COLUMNS.to_vec());
    for r in &body {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

pub fn format_csv(rows: &[ComparisonRow]) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(COMPARISON_COLUMNS)?;
        for r in rows {
            w.write_record(cells(r))?;
        }
        w.flush()?;
    }
    Ok(format!(
        "{COMPARISON_HEADER}\n{}",
        String::from_utf8(buf).expect("csv output is UTF-8")
    ))
}

fn format_timings(rows: &[ComparisonRow]) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["scenario", "method", "wall_clock_seconds"])?;
        for r in rows {
            w.write_record([
                r.scenario.clone(),
                r.method.name().to_string(),
                format!("{:.3}", r.wall_clock_seconds),
            ])?;
        }
        w.flush()?;
    }
    Ok(format!(
        "{TIMINGS_HEADER}\n{}",
        String::from_utf8(buf).expect("csv output is UTF-8")
    ))
}

/// Runs every method on one shared fixed placement (the scenario default
/// when `placement` is `None`) and writes `comparison.txt`,
/// `comparison.csv` and `timings.csv` into `base.out_dir`. Wall-clock times
/// go only to the timings file so the table files are reproducible. A
/// method that fails gets an N/A row carrying the error.
pub fn compare_methods(
    base: &ExperimentSpec,
    methods: &[Method],
    placement: Option<Vec<f64>>,
) -> Result<ComparisonTable> {
    let cfg = base.scenario_config()?;
    let placement = placement.unwrap_or_else(|| cfg.default_placement());
    let mut rows = Vec::new();
    for &method in methods {
        let spec = ExperimentSpec {
            method,
            placement: Placement::Fixed(placement.clone()),
            ..base.clone()
        };
        let start = std::time::Instant::now();
        let row = match run_experiment(&spec) {
            Ok(res) => res.row,
            Err(e) => ComparisonRow {
                scenario: cfg.name.clone(),
                method,
                mean_return: None,
                std_return: None,
                seeds: 0,
                episodes_to_converge: None,
                wall_clock_seconds: start.elapsed().as_secs_f64(),
                note: e.to_string(),
            },
        };
        rows.push(row);
    }
    write_table(&base.out_dir, rows)
}

pub fn write_table(dir: &Path, rows: Vec<ComparisonRow>) -> Result<ComparisonTable> {
    std::fs::create_dir_all(dir)?;
    let text_path = dir.join("comparison.txt");
    let csv_path = dir.join("comparison.csv");
    let timings_path = dir.join("timings.csv");
    std::fs::write(&text_path, format_text(&rows))?;
    std::fs::write(&csv_path, format_csv(&rows)?)?;
    std::fs::write(&timings_path, format_timings(&rows)?)?;
    Ok(ComparisonTable {
        rows,
        text_path,
        csv_path,
        timings_path,
    })
}
