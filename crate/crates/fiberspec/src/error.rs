use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("config `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{context}: {source}")]
    Domain {
        context: String,
        #[source]
        source: fiberspec_core::Error,
    },
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        AppError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 1 for usage and configuration problems, 2 for
    /// bad data or a failed computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config { .. } => 1,
            AppError::Io { .. } | AppError::Parse { .. } | AppError::Domain { .. } => 2,
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> AppResult<T>;
}

impl<T> Context<T> for Result<T, fiberspec_core::Error> {
    fn context(self, what: impl Into<String>) -> AppResult<T> {
        self.map_err(|source| AppError::Domain {
            context: what.into(),
            source,
        })
    }
}
