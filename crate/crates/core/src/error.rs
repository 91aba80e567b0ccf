use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: configuration and contract
/// violations exit with 2, a violated theorem hypothesis with 3, and
/// numeric failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("theorem hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("ill-conditioned linear algebra: {0}")]
    Conditioning(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Parse { .. } => 2,
            Error::Hypothesis(_) => 3,
            Error::Numeric(_) | Error::Conditioning(_) => 4,
            Error::Io(_) | Error::Json(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
