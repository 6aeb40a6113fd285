use thiserror::Error;

/// Errors raised by the replay memory, the decay pipeline and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("replay buffer is empty or carries zero total priority mass")]
    EmptyBuffer,

    #[error("slot {slot} is out of range or unoccupied")]
    InvalidSlot { slot: usize },

    #[error("mass {mass} is outside [0, {total})")]
    OutOfRange { mass: f64, total: f64 },

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("anomaly: {0}")]
    Anomaly(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
