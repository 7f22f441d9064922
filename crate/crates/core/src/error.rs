use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the model, training, data, and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `key` names the offending setting.
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    /// A continuous-time decay rate was not strictly negative.
    #[error("stability violation: state rate a[{index}] = {value} must be < 0")]
    Stability { index: usize, value: f64 },

    #[error("numeric overflow in recurrent state at step {step}")]
    NumericOverflow { step: usize },

    #[error("non-finite values in `{array}`")]
    NonFinite { array: String },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("gradient check failed: max relative error {max_rel_err:e} at {worst} exceeds {tolerance:e}")]
    GradientMismatch {
        max_rel_err: f64,
        worst: String,
        tolerance: f64,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("missing values in {path} at rows {rows:?}")]
    MissingValues { path: PathBuf, rows: Vec<usize> },

    #[error("cannot parse `{text}` at row {row}, column {column}")]
    Parse {
        row: usize,
        column: usize,
        text: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied settings rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Dimension { .. })
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Dimension { .. } => "dimension",
            Error::Stability { .. } => "stability",
            Error::NumericOverflow { .. } => "numeric_overflow",
            Error::NonFinite { .. } => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::GradientMismatch { .. } => "gradient_check",
            Error::Data(_) | Error::MissingValues { .. } | Error::Parse { .. } => "data",
            Error::Io { .. } => "io",
            Error::Serde(_) => "serde",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
