use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("config [{section}] {key}{}: {message}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    ConfigField {
        section: String,
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("{0}")]
    Run(#[from] imbassl::Error),
    /// One or more runs diverged; artifacts were still written.
    #[error("run failed: {0}")]
    Failed(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 for usage and configuration problems, 1 for
    /// failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::ConfigFile { .. }
            | CliError::ConfigSyntax { .. }
            | CliError::ConfigField { .. } => 2,
            CliError::Run(imbassl::Error::Config(_)) => 2,
            CliError::Run(_) | CliError::Failed(_) | CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
