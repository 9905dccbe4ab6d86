use std::path::Path;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const NON_FINITE: i32 = 4;
    pub const SHAPE_CONFIG: i32 = 5;
    pub const GRADCHECK: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config keys or values.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {detail}")]
    Io { path: String, detail: String },

    #[error("training diverged: {0}")]
    NonFinite(String),

    /// Inputs disagree with the model or with each other.
    #[error("{0}")]
    ShapeConfig(String),

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("{0}")]
    Other(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::NonFinite(_) => exit::NON_FINITE,
            CliError::ShapeConfig(_) => exit::SHAPE_CONFIG,
            CliError::GradCheck(_) => exit::GRADCHECK,
            CliError::Other(_) => exit::OTHER,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), detail: e.to_string() }
    }
}

impl From<integscan_core::Error> for CliError {
    fn from(e: integscan_core::Error) -> Self {
        use integscan_core::Error as E;
        match e {
            E::NonFinite { .. } => CliError::NonFinite(e.to_string()),
            E::Shape { .. } | E::Config(_) | E::Checkpoint(_) | E::Capacity(_) => CliError::ShapeConfig(e.to_string()),
            E::Io(io) => CliError::Io { path: "checkpoint".into(), detail: io.to_string() },
            E::InvalidArgument(_) | E::Lookup(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<integscan_imaging::Error> for CliError {
    fn from(e: integscan_imaging::Error) -> Self {
        use integscan_imaging::Error as E;
        match e {
            E::Io { .. } | E::Codec { .. } => CliError::Io { path: String::new(), detail: e.to_string() },
            E::Shape(_) => CliError::ShapeConfig(e.to_string()),
            E::InvalidArgument(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<integscan_synth::Error> for CliError {
    fn from(e: integscan_synth::Error) -> Self {
        use integscan_synth::Error as E;
        match e {
            E::Io { .. } => CliError::Io { path: String::new(), detail: e.to_string() },
            E::Imaging(inner) => inner.into(),
            E::Manifest { .. } => CliError::ShapeConfig(e.to_string()),
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            E::Generation(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<integscan_metrics::Error> for CliError {
    fn from(e: integscan_metrics::Error) -> Self {
        match e {
            integscan_metrics::Error::Imaging(inner) => inner.into(),
            integscan_metrics::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<integscan_robustness::Error> for CliError {
    fn from(e: integscan_robustness::Error) -> Self {
        use integscan_robustness::Error as E;
        match e {
            E::Imaging(inner) => inner.into(),
            E::Metrics(inner) => inner.into(),
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            E::Predict { .. } => CliError::Other(e.to_string()),
        }
    }
}
