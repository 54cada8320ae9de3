use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants map one-to-one onto the machine-readable reason codes emitted by
/// the command-line front end (see [`Error::code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("power must be positive, got {0} mW")]
    NonPositivePower(f64),
    #[error("channel mask has no active channel")]
    EmptyMask,
    #[error("gain setting {0} dB is not supported by the device")]
    UnsupportedGain(f64),
    #[error("parse error at row {row}: {message}")]
    ParseError { row: usize, message: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("insufficient records: {0}")]
    InsufficientRecords(String),
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("covariance needs at least 2 rows, got {0}")]
    InsufficientBatch(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no transfer shots supplied")]
    EmptyShots,
    #[error("source network has no CORAL reference covariance")]
    MissingReference,
    #[error("no fully-loaded record for gain setting {0} dB")]
    MissingFullLoad(f64),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable reason code, suitable for scripts.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonPositivePower(_) => "NonPositivePower",
            Error::EmptyMask => "EmptyMask",
            Error::UnsupportedGain(_) => "UnsupportedGain",
            Error::ParseError { .. } => "ParseError",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::InsufficientRecords(_) => "InsufficientRecords",
            Error::DegenerateStatistics(_) => "DegenerateStatistics",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InsufficientBatch(_) => "InsufficientBatch",
            Error::InsufficientData(_) => "InsufficientData",
            Error::EmptyShots => "EmptyShots",
            Error::MissingReference => "MissingReference",
            Error::MissingFullLoad(_) => "MissingFullLoad",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
