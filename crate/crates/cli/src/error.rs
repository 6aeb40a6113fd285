use thiserror::Error;

/// Harness failure, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid flags or configuration file.
    #[error("configuration error: {0}")]
    Config(String),
    /// A run failed to converge or hit a numerical anomaly.
    #[error("anomaly: {0}")]
    Anomaly(String),
    /// Internal data-structure invariants did not hold.
    #[error("consistency failure: {0}")]
    Consistency(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Anomaly(_) => 3,
            HarnessError::Consistency(_) => 4,
            HarnessError::Io(_) | HarnessError::Json(_) => 1,
        }
    }
}

impl From<pser::Error> for HarnessError {
    fn from(e: pser::Error) -> Self {
        match e {
            pser::Error::InvalidArgument(_) | pser::Error::ResourceGuard(_) => {
                HarnessError::Config(e.to_string())
            }
            pser::Error::Anomaly(_) => HarnessError::Anomaly(e.to_string()),
            other => HarnessError::Consistency(other.to_string()),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
