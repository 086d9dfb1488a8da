//! Experiment orchestration: runs, logs, behavior checks, comparison
//! tables and plot export.

pub mod behavior;
pub mod experiment;
pub mod log;
pub mod plot;
pub mod schema;
pub mod table;

pub use behavior::{
    detect_overwatch, restations_after_relocation, BehaviorReport, BOUNDARY_TOLERANCE,
};
pub use experiment::{
    episodes_to_converge, run_experiment, ComparisonRow, ExperimentResult, ExperimentSpec, Method,
    Placement, SeedRun,
};
pub use log::{
    format_trajectory, parse_trajectory_log, read_trajectory_log, replay, trajectory_from_log,
    write_trajectory, LogRow, ReplayReport, TRAJECTORY_HEADER,
};
pub use plot::{export_plotdata, plot_data, PlotData};
pub use schema::{validate_file, FileKind};
pub use table::{compare_methods, format_csv, format_text, write_table, ComparisonTable};
