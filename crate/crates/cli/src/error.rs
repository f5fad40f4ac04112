use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] chaining::Error),

    /// Bad flags, config entries or instance specs.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub const PASS: u8 = 0;
pub const ASSERTION: u8 = 2;
pub const PRECONDITION: u8 = 3;

impl CliError {
    /// Rejected inputs exit with 3; failures of the machinery itself with 1.
    pub fn exit_code(&self) -> ExitCode {
        use chaining::Error as E;
        let code = match self {
            CliError::Usage(_) => PRECONDITION,
            CliError::Core(
                E::Precondition(_) | E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::EmptySet | E::Parse(_),
            ) => PRECONDITION,
            CliError::Json(_) => PRECONDITION,
            CliError::Core(_) | CliError::Io { .. } => 1,
        };
        ExitCode::from(code)
    }
}

pub fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}
