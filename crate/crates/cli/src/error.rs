use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    /// Rejected before any training starts.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dali_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    /// One or more seeds of a sweep stopped early; the others completed.
    #[error("{failed} of {total} seeds failed")]
    SeedsFailed { failed: usize, total: usize },
}

impl RunError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn message(&self) -> String {
        match self {
            RunError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// Process exit status: 1 for configuration problems, 2 for failures
    /// during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}
