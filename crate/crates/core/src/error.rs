use std::io;

use thiserror::Error;

/// Errors produced by the environment, policy, bounds and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("arm {arm} out of range 1..={k}")]
    ArmOutOfRange { arm: usize, k: usize },

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("no change-point estimate is defined")]
    EstimateUndefined,

    #[error("arm {0} has not been played")]
    UnplayedArm(usize),

    #[error("expected {expected} change point(s), environment has {found}")]
    ChangePointCount { expected: String, found: usize },

    #[error("environment is not of the form (mu, ..., mu, mu + delta)")]
    NotBestArmShape,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed records: {0}")]
    Schema(String),

    #[error("{0}")]
    Io(#[from] io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
