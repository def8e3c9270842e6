use std::path::Path;

/// Errors surfaced by the CLI layer. Configuration problems are kept apart
/// from module failures so the binary can exit with distinct status codes.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Module(#[from] fracperim_core::Error),
    #[error("{0}")]
    Io(String),
}

impl LabError {
    /// 2 for configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> LabError {
    LabError::Io(format!("{}: {e}", path.display()))
}

pub type Result<T> = std::result::Result<T, LabError>;
