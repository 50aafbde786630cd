use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported capacity {0}; expected one of 16, 32, 64")]
    UnsupportedCapacity(usize),
    #[error("invalid variant: {0}")]
    InvalidVariant(String),
    #[error("network topologies differ: {0}")]
    TopologyMismatch(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("replay buffer holds {have} transitions, need {need}")]
    BufferUnderfilled { have: usize, need: usize },
    #[error("environment already terminal; reset before stepping")]
    TerminalStep,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
