use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("value {value} outside [0,1] in {what}")]
    WeightOutOfRange { what: String, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: {what}")]
    Divergence { epoch: usize, what: String },
    #[error("non-positive depth {depth} at point {index}")]
    NonPositiveDepth { index: usize, depth: f64 },
    #[error("overlapping segments at {0}")]
    Overlap(usize),
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("config: {0}")]
    Config(String),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Malformed(_) => "malformed",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::WeightOutOfRange { .. } => "weight_out_of_range",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite(_) => "non_finite",
            Error::Divergence { .. } => "divergence",
            Error::NonPositiveDepth { .. } => "non_positive_depth",
            Error::Overlap(_) => "overlap",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
