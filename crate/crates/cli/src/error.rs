use thiserror::Error;

/// Failures that stop a command. Tolerance failures are not errors: the
/// command still writes its report and exits with status 1.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent input; exit status 2.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] fedinfo::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            _ => 1,
        }
    }
}
