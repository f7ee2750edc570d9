use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input not persistently exciting of order {order} after {attempts} draws")]
    NotExciting { order: usize, attempts: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("plan: {0}")]
    Plan(String),
    #[error("mission aborted at step {step}: {reason}")]
    Aborted { step: usize, reason: String },
    #[error(transparent)]
    Solver(#[from] miqp::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
