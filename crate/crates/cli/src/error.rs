use boclab::ErrorClass;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] boclab::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Config(_) | CliError::Input(_) | CliError::Io { .. } | CliError::Json(_) => ErrorClass::Input,
            CliError::Internal(_) => ErrorClass::Internal,
        }
    }

    /// 1 numerical, 2 input, 3 internal.
    pub fn exit_code(&self) -> i32 {
        exit_code(self.class())
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Numerical => 1,
        ErrorClass::Input => 2,
        ErrorClass::Internal => 3,
    }
}
