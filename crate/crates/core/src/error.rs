use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("duplicate individual_id {id:?} at rows {first_row} and {second_row}")]
    DuplicateIndividual {
        id: String,
        first_row: usize,
        second_row: usize,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("empty household {0:?}")]
    EmptyHousehold(String),
    #[error("ground truth references unknown {kind} {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("cannot fit model: {0}")]
    Degenerate(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short code for machine-readable error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Csv { .. } | Error::Parse { .. } => "E_PARSE",
            Error::DuplicateIndividual { .. } => "E_DUPLICATE_ID",
            Error::Schema(_) => "E_SCHEMA",
            Error::InvalidData(_) => "E_DATA",
            Error::Config(_) => "E_CONFIG",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::UnknownFeature(_) => "E_UNKNOWN_FEATURE",
            Error::EmptyHousehold(_) => "E_EMPTY_HOUSEHOLD",
            Error::UnknownId { .. } => "E_UNKNOWN_ID",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::Json(_) => "E_JSON",
        }
    }
}
