#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Imaging(#[from] integscan_imaging::Error),

    #[error(transparent)]
    Metrics(#[from] integscan_metrics::Error),

    /// The prediction callback failed for one image.
    #[error("prediction failed for image {index}: {message}")]
    Predict { index: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
