use thiserror::Error;

/// Errors produced by the scheduling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid DAG: {0}")]
    InvalidDag(String),

    #[error("dangling reference: {0}")]
    Reference(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("constraint {constraint} violated: {detail}")]
    Constraint {
        constraint: &'static str,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value in {layer}")]
    Numeric { layer: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("size limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("checksum mismatch (expected {expected:#018x}, found {found:#018x})")]
    Checksum { expected: u64, found: u64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("transport closed")]
    TransportClosed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads a text file, naming the path in any error.
pub fn read_text(path: impl AsRef<std::path::Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl Error {
    /// Short machine-readable tag, used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDag(_) => "invalid_dag",
            Error::Reference(_) => "reference",
            Error::Precondition(_) => "precondition",
            Error::Constraint { .. } => "constraint",
            Error::Parameter(_) => "parameter",
            Error::Numeric { .. } => "numeric",
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::EmptyBuffer => "empty_buffer",
            Error::LimitExceeded(_) => "limit_exceeded",
            Error::Validation(_) => "validation",
            Error::Checksum { .. } => "checksum",
            Error::Format(_) => "format",
            Error::TransportClosed => "transport_closed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
