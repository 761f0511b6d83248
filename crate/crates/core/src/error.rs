//! Error type shared by every module of the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Transport failure, exhausted retries, or a 5xx that never recovered.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    /// Terminal 4xx from a service.
    #[error("backend rejected request (HTTP {status}): {body}")]
    BackendRejected { status: u16, body: String },

    /// The service answered but the payload did not have the expected shape.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A backend was asked for something it cannot provide (e.g. logprobs).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// AUROC with a single class present.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("mock script has no reply for prompt: {0}")]
    MockScriptMiss(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// Dataset ingestion failed; one entry per offending record.
    #[error("failed to parse {} record(s) from {path}: {}", failures.len(), failures.join("; "))]
    DatasetParse { path: PathBuf, failures: Vec<String> },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
