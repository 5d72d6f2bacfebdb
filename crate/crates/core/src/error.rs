use thiserror::Error;

use crate::refine::TraceRow;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The plain-domain kernel under- or overflowed.
    #[error("numeric failure: {0}; rerun with the stabilized (log-domain) solver")]
    NumericFailure(String),

    #[error("grid sampler selected no valid pixels")]
    EmptySelection,

    #[error("unsupported instance: {0}")]
    UnsupportedInstance(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("refinement diverged after {} steps", trace.len())]
    Divergence { trace: Vec<TraceRow> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
