use thiserror::Error;

use crate::config::ConfigError;
use crate::fsm::FsmError;
use crate::metrics::MetricsError;
use crate::similarity::SimilarityError;
use crate::trace::TraceError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Fsm(#[from] FsmError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure came from the filesystem rather than bad input.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Trace(TraceError::Io(_))
                | Error::Similarity(SimilarityError::Io { .. })
                | Error::Config(ConfigError::Io { .. })
        )
    }
}
