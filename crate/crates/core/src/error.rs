use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty collection")]
    EmptyCollection,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite component at index {index}")]
    NonFinite { index: usize },

    #[error("undefined direction: zero-norm vector")]
    UndefinedDirection,

    #[error("singular covariance; increase shrinkage")]
    SingularCovariance,

    #[error("degenerate bandwidth: all points identical")]
    DegenerateBandwidth,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unrecognized unit token `{token}` at position {position}")]
    UnitToken { token: String, position: usize },

    #[error("incompatible dimension: {unit} cannot express {kind}")]
    IncompatibleDimension { unit: String, kind: String },

    #[error("unparseable value `{0}`")]
    Value(String),

    #[error("provider contract violation: {0}")]
    ProviderContract(String),

    #[error("embedding request failed after {attempts} attempts: {message}")]
    Http { attempts: u32, message: String },

    #[error("training diverged at epoch {epoch} (lr {lr})")]
    Diverged { epoch: usize, lr: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("every candidate failed")]
    AllCandidatesFailed,

    #[error("unsupported document version {0}")]
    Version(u32),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
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
