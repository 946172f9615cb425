use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mathematical precondition violated (dimension mismatch, non-finite input, empty set).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input file. `line` is 1-based when known.
    #[error("format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, message: String },

    #[error("unsupported file version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("unsupported conditioning concept `{0}` (zero count)")]
    UnsupportedConditioning(String),

    #[error("invalid program: {0}")]
    Validation(String),

    #[error("execution error: {0}")]
    Execution(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 for bad input or configuration,
    /// 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::Io { .. } | Error::Execution(_) => 2,
            _ => 1,
        }
    }
}
