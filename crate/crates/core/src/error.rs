use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("weight vectors do not share a parameter layout")]
    LayoutMismatch,

    #[error("batch is empty")]
    EmptyBatch,

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("network has no batch normalization layers")]
    BatchNormDisabled,

    #[error("operation is not defined for networks with batch normalization")]
    BatchNormUnsupported,

    #[error("batch normalization statistics are required in eval mode")]
    MissingBatchNormStats,

    #[error("curve has no trainable parameters (segment); evaluate it with curve-eval instead")]
    NothingToTrain,

    #[error("curve endpoints coincide; length ratio is undefined")]
    CoincidentEndpoints,

    #[error("plane points are collinear: {0}")]
    Collinear(String),

    #[error("ensemble is empty: {0}")]
    EmptyEnsemble(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("checkpoint parameter count mismatch: expected {expected}, found {found}")]
    CheckpointCount { expected: usize, found: usize },

    #[error("checkpoint payload is corrupt: {0}")]
    CheckpointPayload(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short identifier, used by the CLI and the Python bindings.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::LayoutMismatch => "layout-mismatch",
            Error::EmptyBatch => "empty-batch",
            Error::LabelOutOfRange { .. } => "label-out-of-range",
            Error::BatchNormDisabled => "batch-norm-disabled",
            Error::BatchNormUnsupported => "batch-norm-unsupported",
            Error::MissingBatchNormStats => "missing-bn-stats",
            Error::NothingToTrain => "nothing-to-train",
            Error::CoincidentEndpoints => "coincident-endpoints",
            Error::Collinear(_) => "collinear",
            Error::EmptyEnsemble(_) => "empty-ensemble",
            Error::NonFinite(_) => "non-finite",
            Error::Csv { .. } => "csv",
            Error::CheckpointVersion { .. } => "checkpoint-version",
            Error::CheckpointCount { .. } => "checkpoint-count",
            Error::CheckpointPayload(_) => "checkpoint-payload",
            Error::Format { .. } => "format",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }

    /// Whether the error stems from invalid user input rather than a failure at run time.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::NonFinite(_) | Error::Collinear(_) | Error::CoincidentEndpoints
        )
    }
}
