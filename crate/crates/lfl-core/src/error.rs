//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, data handling, and training.
#[derive(Debug, Error)]
pub enum LflError {
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("side-information dimension mismatch: expected {expected}, got {got}")]
    SideDimMismatch { expected: usize, got: usize },

    #[error("{0}")]
    InvalidModel(String),

    #[error("objective/label-kind mismatch: {0}")]
    LabelKindMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("objective became non-finite at {context} (divergent learning rate?)")]
    NonFiniteObjective { context: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
