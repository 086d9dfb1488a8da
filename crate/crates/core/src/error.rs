use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("episode already finished at step {t}")]
    EpisodeDone { t: usize },

    #[error("position {position} is not in the support of adversary {adversary}")]
    NotInSupport { adversary: usize, position: f64 },

    #[error("instance too large for exact solving: {0}")]
    InstanceTooLarge(String),

    #[error("oracle budget exceeded: {states} states x {stages} stages exceeds the configured budget of {budget} values")]
    BudgetExceeded {
        states: usize,
        stages: usize,
        budget: usize,
    },

    #[error("heuristic not applicable: {0}")]
    HeuristicScope(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("backward called on a tape without a recorded forward pass")]
    BackwardWithoutForward,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("malformed rollout batch: {0}")]
    MalformedBatch(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("malformed log: {0}")]
    MalformedLog(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
