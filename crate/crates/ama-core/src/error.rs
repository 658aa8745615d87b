use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// config/validation errors exit 1, runtime/numeric errors exit 2,
/// I/O errors exit 3.
#[derive(Debug, Error)]
pub enum AmaError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training error at step {step}: {message}")]
    Training { step: usize, message: String },
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AmaError {
    /// CLI exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            AmaError::InvalidWeights(_)
            | AmaError::Config(_)
            | AmaError::InvalidInput(_)
            | AmaError::Shape(_)
            | AmaError::Parse { .. } => 1,
            AmaError::Numeric(_) | AmaError::Training { .. } | AmaError::Oracle(_) => 2,
            AmaError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, AmaError>;
