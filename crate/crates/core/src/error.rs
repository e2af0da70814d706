use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,

    #[error("invalid state {id} (state space has {n_states} states)")]
    InvalidState { id: usize, n_states: usize },

    #[error("invalid action {id} (action space has {n_actions} actions)")]
    InvalidAction { id: usize, n_actions: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("not a probability vector: {0}")]
    NotSimplex(String),

    #[error("horizon too long: {horizon} steps needed for tolerance {tol:e}")]
    HorizonTooLong { horizon: f64, tol: f64 },

    #[error("inner SGD diverged at outer iteration {iteration}, step {step}")]
    SgdDiverged { iteration: usize, step: usize },

    #[error("contraction condition violated: gamma * S_P = {0} >= 1")]
    ContractionFailed(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
