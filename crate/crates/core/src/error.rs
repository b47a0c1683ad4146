use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    /// An instance or series violates one of its invariants.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("precedence cycle through activity {0}")]
    PrecedenceCycle(u32),

    /// Some activity cannot be placed anywhere regardless of the genome.
    #[error("unschedulable instance: activity {id}: {reason}")]
    Unschedulable { id: u32, reason: String },

    #[error("MASE is undefined: {0}")]
    Mase(String),

    #[error("brute-force dispatch refused: {0}")]
    OracleTooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A pipeline stage failed; wraps the underlying error.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for errors caused by bad input data rather than a failing stage.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Json { .. }
                | Error::Csv { .. }
                | Error::Validation(_)
                | Error::PrecedenceCycle(_)
                | Error::Unschedulable { .. }
                | Error::Config(_)
        )
    }
}
