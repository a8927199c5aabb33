use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: line {line}: timestamp {timestamp} does not strictly follow the previous row")]
    Ordering {
        path: PathBuf,
        line: u64,
        timestamp: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("transport error (retriable: {retriable}): {msg}")]
    Transport { retriable: bool, msg: String },

    #[error("feature `{feature}` has no value at or before the first bar")]
    Coverage { feature: String },

    #[error("missing input {artifact}: {hint}")]
    MissingInput { artifact: String, hint: String },

    #[error("ffd weights for d={d} did not fall below tau={tau} within {max_width} terms")]
    WidthOverflow { d: f64, tau: f64, max_width: usize },

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no grid value makes the series stationary; best d={best_d} with p={best_p}")]
    NoStationaryD { best_d: f64, best_p: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("feature set mismatch: {0}")]
    SpecMismatch(String),

    #[error("non-finite value in layer {layer}")]
    Numeric { layer: String },

    #[error("training diverged after epoch {last_finite_epoch}")]
    Training { last_finite_epoch: usize },

    #[error("equity fell to {equity} at {timestamp}")]
    EquityBreach { timestamp: String, equity: f64 },

    #[error("walk-forward plan violation: {0}")]
    PlanViolation(String),

    #[error("resume refused: {0}")]
    ResumeMismatch(String),

    #[error("split {index}: {source}")]
    Split {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::ResumeMismatch(_) | Error::PlanViolation(_) => {
                ErrorKind::Config
            }
            Error::Parse { .. }
            | Error::Ordering { .. }
            | Error::Io { .. }
            | Error::Transport { .. }
            | Error::Coverage { .. }
            | Error::MissingInput { .. }
            | Error::InsufficientData { .. }
            | Error::Degenerate(_)
            | Error::Domain(_)
            | Error::Shape(_)
            | Error::SpecMismatch(_)
            | Error::Serde(_) => ErrorKind::Data,
            Error::WidthOverflow { .. }
            | Error::NoStationaryD { .. }
            | Error::Numeric { .. }
            | Error::Training { .. }
            | Error::EquityBreach { .. } => ErrorKind::Numeric,
            Error::Split { source, .. } => source.kind(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_split(self, index: usize) -> Self {
        Error::Split {
            index,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
