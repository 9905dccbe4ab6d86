#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("NIQE fit failed: {0}")]
    Fit(String),

    /// A covariance stayed singular after every regularization retry.
    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(transparent)]
    Imaging(#[from] integscan_imaging::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
