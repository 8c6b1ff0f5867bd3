use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Data,
    Oracle,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate asset id `{0}`")]
    DuplicateAsset(String),

    #[error("transaction at line {line} references unknown asset `{asset_id}`")]
    UnknownAsset { asset_id: String, line: u64 },

    #[error("asset `{0}` has no first-sale timestamp and no transactions")]
    MissingFirstSale(String),

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("embedding file truncated: expected {expected} payload bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("non-finite embedding value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("ids file has {found} entries but embedding header declares {expected}")]
    IdCountMismatch { expected: usize, found: usize },

    #[error("duplicate embedding id `{0}`")]
    DuplicateEmbeddingId(String),

    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("invalid time window: start {start} is not before end {end}")]
    InvalidWindow { start: i64, end: i64 },

    #[error("invalid threshold {0}: must lie in (0, 1]")]
    InvalidThreshold(f64),

    #[error("no nodes left after windowing")]
    EmptyGraph,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle protocol violation: {0}")]
    OracleProtocol(String),

    #[error("oracle did not answer within {0:?}")]
    OracleTimeout(std::time::Duration),

    #[error("oracle call budget exhausted: {needed} evaluations needed, budget is {budget}")]
    OracleBudget { needed: usize, budget: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Config(_) | Error::InvalidThreshold(_) | Error::InvalidWindow { .. } => {
                ErrorCategory::Config
            }
            Error::OracleProtocol(_) | Error::OracleTimeout(_) | Error::OracleBudget { .. } => {
                ErrorCategory::Oracle
            }
            _ => ErrorCategory::Data,
        }
    }
}
