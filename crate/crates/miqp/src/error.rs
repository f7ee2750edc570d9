use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable {0} is not binary")]
    NotBinary(String),
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("relaxation is infeasible")]
    Infeasible,
    #[error("relaxation is unbounded")]
    Unbounded,
    #[error("QP backend failed: {0}")]
    Backend(String),
    #[error("enumeration cap exceeded: {binaries} binaries > {cap}")]
    EnumerationCap { binaries: usize, cap: usize },
    #[error("MPS parse error at line {line}: {msg}")]
    Mps { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
