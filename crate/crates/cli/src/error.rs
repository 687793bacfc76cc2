use lpvrom::RomError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {what}; run `lpvrom {command}` first")]
    Missing { what: String, command: &'static str },
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 configuration, 3 numerical, 4 missing
    /// prerequisite, 1 anything else (I/O, corrupt files).
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Missing { .. } => 4,
            Self::Rom(RomError::Io(_) | RomError::Parse(_)) | Self::Io(_) => 1,
            Self::Rom(_) => 3,
        }
    }
}

pub type CliResult<V> = std::result::Result<V, CliError>;
