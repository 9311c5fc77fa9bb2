use std::io;

use crate::system_file::Diagnostic;

/// Exit codes by error class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const IO: i32 = 4;
    pub const NUMERICAL: i32 = 5;
    pub const MEMORY_CAP: i32 = 6;
    pub const VERIFY_FAILED: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}", render(.path, .diagnostics))]
    Parse { path: String, diagnostics: Vec<Diagnostic> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] affctl_core::Error),
}

fn render(path: &str, diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| format!("{path}:{d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use affctl_core::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Parse { .. } => exit::PARSE,
            CliError::Io { .. } => exit::IO,
            CliError::Core(E::MemoryCap { .. }) => exit::MEMORY_CAP,
            CliError::Core(E::InvalidArgument(_) | E::InvalidControl(_) | E::DimensionMismatch { .. }) => exit::USAGE,
            CliError::Core(_) => exit::NUMERICAL,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
