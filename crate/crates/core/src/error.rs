use thiserror::Error;

use crate::oll::LearnerSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("X + I is not positive definite")]
    NotPositiveDefinite,

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Box<LearnerSolution>,
    },

    #[error("projection stopped after {iterations} iterations with residual {residual:e}")]
    ProjectionNotConverged {
        iterations: usize,
        residual: f64,
        best: nalgebra::DMatrix<f64>,
    },

    #[error("user {user} out of range for {n_users} users")]
    UserOutOfRange { user: usize, n_users: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invariant `{invariant}` violated at round {round}: {detail}")]
    Invariant {
        invariant: &'static str,
        round: u64,
        detail: String,
    },
}
