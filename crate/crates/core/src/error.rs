use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },

    #[error("generation failure: {0}")]
    GenerationFailure(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
