use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("zero vector supplied where a nonzero vector is required")]
    ZeroVector,

    #[error("no eigenvalue of the joint Gram matrix exceeds the cutoff {cutoff:e}")]
    EmptySubspace { cutoff: f64 },

    #[error("subspace spanned by the input columns is trivial")]
    ZeroSubspace,

    #[error("operation requires a {expected} system, got {found}")]
    SpaceMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Gaussian sample {index} has zero norm after {attempts} draws")]
    SingularSample { index: usize, attempts: u32 },

    #[error("loss is not finite at the initial point")]
    AllEvaluationsFailed,

    #[error("schema error at row {row}, column {column}: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Category used by front ends to map failures onto exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::SpaceMismatch { .. } => {
                ErrorKind::Config
            }
            Error::Schema { .. }
            | Error::Checksum(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::DegenerateData(_)
            | Error::InsufficientData(_) => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
