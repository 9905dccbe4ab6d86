#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A randomized construction found no admissible configuration.
    #[error("generation failed: {0}")]
    Generation(String),

    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },

    #[error(transparent)]
    Imaging(#[from] integscan_imaging::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}
