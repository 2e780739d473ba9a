use thiserror::Error;

/// Failures that map to a documented exit code.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    /// The run finished but some quantity could not be estimated; partial
    /// output has been written.
    #[error("degenerate run: {0}")]
    Degenerate(String),
    #[error("oracle refused: {0}")]
    Oracle(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Oracle(_) => 4,
        }
    }
}
