use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface-tension matrix: {0}")]
    InvalidTension(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid kernel config: {0}")]
    InvalidKernel(String),
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("chamber count mismatch: partition has m={partition}, matrix has m={matrix}")]
    ChamberMismatch { partition: usize, matrix: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
