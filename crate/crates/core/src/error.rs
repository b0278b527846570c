use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("index {index} out of range for {what} (size {bound})")]
    Index {
        what: String,
        index: usize,
        bound: usize,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate batch: group {group} has {rows} row(s), at least 2 are required in training mode")]
    DegenerateBatch { group: String, rows: usize },

    #[error("objective evaluation produced a non-finite value: {0}")]
    Evaluation(String),

    #[error("AUC undefined: {positives} positive(s), {negatives} negative(s)")]
    UndefinedAuc { positives: u64, negatives: u64 },

    #[error("cannot calibrate domain {domain} to CTR {target}: {reason}")]
    Calibration {
        domain: usize,
        target: f64,
        reason: String,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("schema mismatch: expected [{}], found [{}]", expected.join(", "), found.join(", "))]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("malformed container {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "E_DIMENSION",
            Error::Index { .. } => "E_INDEX",
            Error::State(_) => "E_STATE",
            Error::Validation(_) => "E_VALIDATION",
            Error::Config(_) => "E_CONFIG",
            Error::DegenerateBatch { .. } => "E_DEGENERATE_BATCH",
            Error::Evaluation(_) => "E_EVALUATION",
            Error::UndefinedAuc { .. } => "E_UNDEFINED_AUC",
            Error::Calibration { .. } => "E_CALIBRATION",
            Error::Parse { .. } => "E_PARSE",
            Error::SchemaMismatch { .. } => "E_SCHEMA",
            Error::Format { .. } => "E_FORMAT",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Io { .. } => "E_IO",
        }
    }

    /// Process exit code: 1 validation, 2 runtime, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Dimension { .. }
            | Error::Index { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::DegenerateBatch { .. }
            | Error::UndefinedAuc { .. }
            | Error::Parse { .. }
            | Error::SchemaMismatch { .. } => 1,
            Error::State(_) | Error::Format { .. } | Error::Io { .. } | Error::Calibration { .. } => 2,
            Error::Evaluation(_) | Error::Numeric(_) => 3,
        }
    }
}
