use std::fmt;

/// Errors raised by tensor operations, the model, and checkpoint IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A fixed-capacity table (e.g. rotary angles) was asked for more positions than it holds.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A forward op produced NaN or infinity from finite inputs.
    #[error("non-finite values produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl fmt::Display) -> Error {
    Error::Shape {
        op,
        detail: detail.to_string(),
    }
}
