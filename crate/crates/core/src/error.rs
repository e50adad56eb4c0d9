use thiserror::Error;

pub type Result<T> = std::result::Result<T, FdlmError>;

#[derive(Debug, Error)]
pub enum FdlmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mapped solid element (or evaluation point) left the fluid domain.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<FdlmError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FdlmError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        FdlmError::InvalidArgument(msg.into())
    }

    pub fn at_level(self, level: usize) -> Self {
        FdlmError::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}
