use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid or unparseable configuration value.
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Argument outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke a documented precondition (length mismatch, overspend, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Denoising is undefined because every channel gain is zero.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// Empty active set; nothing to aggregate this round.
    #[error("no active devices to aggregate")]
    NoAggregation,

    #[error("non-finite value in round {round}, device {device:?}: {message}")]
    Numerical {
        round: usize,
        device: Option<usize>,
        message: String,
    },

    #[error("{path}: {message} (byte offset {offset})")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("convergence diagnostics unavailable: every round was idle")]
    DiagnosticsUnavailable,

    #[error("run directory {dir}: {message}")]
    Report { dir: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
