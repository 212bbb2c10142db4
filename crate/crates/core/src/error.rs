use thiserror::Error;

use crate::graph::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("graph is invalid: {0}")]
    InvalidGraph(ValidationReport),

    #[error("cycle detected in graph")]
    Cycle,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
