use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),

    #[error("expected {expected} actuator voltages, got {got}")]
    VoltageLength { expected: usize, got: usize },

    #[error("shape grids do not match ({left} vs {right} nodes)")]
    GridMismatch { left: usize, right: usize },

    #[error("contact solver did not converge within {iterations} pivots")]
    NonConvergence { iterations: usize },

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("no bracket for moment gain: {0}")]
    NoBracket(String),

    #[error("invalid roof profile: {0}")]
    InvalidRoof(String),

    #[error("x = {x} m is outside the roof domain [{lo}, {hi}] m")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid optimizer setup: {0}")]
    InvalidDomain(String),

    #[error("gaussian-process kernel factorization failed")]
    Factorization,

    #[error("loss was non-finite at {bad} of {total} evaluations")]
    NonFiniteLoss { bad: usize, total: usize },

    #[error("height {height_cm} cm is not reachable within the voltage box")]
    Unreachable { height_cm: f64 },

    #[error("command violates the safety line by {excess_cm} cm")]
    Violation { excess_cm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
