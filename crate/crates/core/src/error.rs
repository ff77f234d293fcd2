use thiserror::Error;

#[derive(Debug, Error)]
pub enum SigmaError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("component count mismatch: expected {expected}, got {got}")]
    ComponentMismatch { expected: usize, got: usize },

    #[error("non-finite state at t = {time} (candidate blow-up in {quantity})")]
    BlowUp { time: f64, quantity: String },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SigmaError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SigmaError {
    SigmaError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
