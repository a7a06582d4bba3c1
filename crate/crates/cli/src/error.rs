use std::path::Path;

use thiserror::Error;

/// Failures grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
            CliError::Invariant(m) => CliError::Invariant(format!("{what}: {m}")),
        }
    }
}

impl From<hoiseg_core::Error> for CliError {
    fn from(e: hoiseg_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else if matches!(e, hoiseg_core::Error::Invariant(_)) {
            CliError::Invariant(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                hoiseg_core::Error::from(e).into()
            }
        }
    )*};
}

via_core!(
    hoiseg_core::config::ConfigError,
    hoiseg_core::trace::TraceError,
    hoiseg_core::similarity::SimilarityError,
    hoiseg_core::metrics::MetricsError
);

pub type CliResult<T> = Result<T, CliError>;
