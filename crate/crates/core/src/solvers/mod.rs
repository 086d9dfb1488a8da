//! Reference policies: the exact oracle, the myopic greedy baseline, the
//! bounding-overwatch heuristic and the constant-speed sweep.

pub mod greedy;
pub mod heuristic;
pub mod oracle;
pub mod sweep;

pub use greedy::greedy_baseline;
pub use heuristic::overwatch_heuristic;
pub use oracle::{solve_exact, solve_exact_cached, DiscreteInstance, Objective, OracleSolution};
pub use sweep::constant_speed_sweep;
