use std::path::PathBuf;

use mieval::Error as CoreError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration value is missing, malformed or inconsistent.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } | CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::UnknownStrategy { .. } => 2,
                CoreError::Numeric(_) => 4,
                _ => 3,
            },
        }
    }
}

/// Attaches a config field path to a core validation error.
pub fn at(field: &str) -> impl FnOnce(CoreError) -> CliError + '_ {
    move |e| match e {
        CoreError::Config(msg) => CliError::config(field, msg),
        CoreError::UnknownStrategy { .. } => CliError::config(field, e),
        other => CliError::Core(other),
    }
}
