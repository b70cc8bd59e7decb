use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grids, parameters or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration produced a non-finite state {state:?}")]
    Integration { state: Vec<f64> },

    /// A structural property that should hold by construction did not.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
