use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent configuration, or an unwritable
    /// output path.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] qmimo_core::Error),

    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for configuration problems, 1 for failed checks and numeric faults.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(qmimo_core::Error::InvalidParameter { .. }) => 2,
            CliError::Core(_) | CliError::Verification(_) => 1,
        }
    }
}
