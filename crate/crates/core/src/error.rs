//! Error taxonomy shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration (grid size, solver parameters, malformed specs).
    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition on the mathematical domain failed (non-convexity,
    /// singular tensors, excluded parameter ranges).
    #[error("domain error: {0}")]
    Domain(String),

    /// A probe loop or sample left the valid region of its chart.
    #[error("range error: {0}")]
    Range(String),

    /// A local probe could not be completed (field vanished on the loop,
    /// eigenvalue crossing, ...); retrying with another radius may help.
    #[error("probe error: {0}")]
    Probe(String),

    /// Loop sampling too coarse for a reliable winding number.
    #[error("undersampled loop: {0}")]
    Undersampled(String),

    /// An iterative solver did not reach its tolerance.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
