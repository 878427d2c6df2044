use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular pairing on the critical set: {0}")]
    SingularPairing(String),
    #[error("contact condition degenerates: {0}")]
    DegenerateContact(String),
    #[error("symplectic form degenerates: {0}")]
    DegenerateSymplectic(String),
    #[error("point is not on the critical set: {0}")]
    NotOnCriticalSet(String),
    #[error("vanishing normalization: {0}")]
    Degeneracy(String),
    #[error("perturbation too large: {0}")]
    EpsilonTooLarge(String),
    #[error("gluing failed: {0}")]
    Gluing(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 1,
        }
    }
}
