//! Chart-ready CSV export of one episode.
//!
//! * `robots.csv` (`# format: overwatch-plot-robots/1`): `t,robot,position,speed,guard`,
//!   one row per robot per step plus the final positions with empty speed
//!   and guard.
//! * `guards.csv` (`# format: overwatch-plot-guards/1`): `t,robot,adversary,position,speed,discount`
//!   for every robot-step whose guard actually discounts its target.
//! * `zones.csv` (`# format: overwatch-plot-zones/1`): `adversary,t_start,t_end,position,lo,hi,peak`,
//!   one band per adversary and placement interval.
//!
//! Robots and adversaries are 1-based. An episode with no steps yields
//! header-only files.

use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::env;
use crate::error::Result;
use crate::trajectory::Trajectory;

pub const ROBOTS_HEADER: &str = "# format: overwatch-plot-robots/1";
pub const GUARDS_HEADER: &str = "# format: overwatch-plot-guards/1";
pub const ZONES_HEADER: &str = "# format: overwatch-plot-zones/1";
pub const ROBOTS_COLUMNS: [&str; 5] = ["t", "robot", "position", "speed", "guard"];
pub const GUARDS_COLUMNS: [&str; 6] = ["t", "robot", "adversary", "position", "speed", "discount"];
pub const ZONES_COLUMNS: [&str; 7] = [
    "adversary",
    "t_start",
    "t_end",
    "position",
    "lo",
    "hi",
    "peak",
];

fn render(header: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(format!(
        "{header}\n{}",
        String::from_utf8(buf).expect("csv output is UTF-8")
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub robots: String,
    pub guards: String,
    pub zones: String,
}

pub fn plot_data(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<PlotData> {
    let mut robots = Vec::new();
    let mut guards = Vec::new();
    let mut zones = Vec::new();
    if !traj.is_empty() {
        for tr in &traj.transitions {
            let s = &tr.state;
            for i in 0..cfg.n_robots {
                let g = if cfg.n_adversaries() == 0 {
                    0
                } else {
                    tr.action.guards[i] + 1
                };
                robots.push(vec![
                    s.t.to_string(),
                    (i + 1).to_string(),
                    s.positions[i].to_string(),
                    tr.action.speeds[i].to_string(),
                    g.to_string(),
                ]);
                if s.positions[i] >= cfg.route_length || cfg.n_adversaries() == 0 {
                    continue;
                }
                let j = tr.action.guards[i];
                let d = env::guard_discount(
                    tr.action.speeds[i],
                    j,
                    j,
                    s.positions[i],
                    s.adversaries[j],
                    cfg,
                );
                if d < 1.0 {
                    guards.push(vec![
                        s.t.to_string(),
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        s.positions[i].to_string(),
                        tr.action.speeds[i].to_string(),
                        d.to_string(),
                    ]);
                }
            }
        }
        let last = traj.final_state();
        for i in 0..cfg.n_robots {
            robots.push(vec![
                last.t.to_string(),
                (i + 1).to_string(),
                last.positions[i].to_string(),
                String::new(),
                String::new(),
            ]);
        }
        for j in 0..cfg.n_adversaries() {
            let mut start = 0;
            let mut z = traj.transitions[0].state.adversaries[j];
            let mut push = |z: f64, from: usize, to: usize| {
                let (lo, hi) = cfg.zone(j, z);
                zones.push(vec![
                    (j + 1).to_string(),
                    from.to_string(),
                    to.to_string(),
                    z.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    cfg.adversaries[j].risk.peak().to_string(),
                ]);
            };
            for tr in &traj.transitions {
                let now = tr.state.adversaries[j];
                if now.to_bits() != z.to_bits() {
                    push(z, start, tr.state.t);
                    start = tr.state.t;
                    z = now;
                }
            }
            push(z, start, last.t);
        }
    }
    Ok(PlotData {
        robots: render(ROBOTS_HEADER, &ROBOTS_COLUMNS, &robots)?,
        guards: render(GUARDS_HEADER, &GUARDS_COLUMNS, &guards)?,
        zones: render(ZONES_HEADER, &ZONES_COLUMNS, &zones)?,
    })
}

/// Writes the three plot files into `dir` and returns their paths.
pub fn export_plotdata(
    traj: &Trajectory,
    cfg: &ScenarioConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let data = plot_data(traj, cfg)?;
    let files = [
        ("robots.csv", data.robots),
        ("guards.csv", data.guards),
        ("zones.csv", data.zones),
    ];
    let mut paths = Vec::new();
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        paths.push(p);
    }
    Ok(paths)
}
