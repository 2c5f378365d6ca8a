use thiserror::Error;

/// Failure modes shared by every layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested accuracy could not be reached at the working precision.
    /// `n` carries the failing polynomial degree when a Hankel pivot broke down.
    #[error("precision failure: {what}")]
    PrecisionFailure { what: String, n: Option<usize> },

    #[error("singularity encountered after t = {t_last}: {detail}")]
    SingularityEncountered { t_last: f64, detail: String },

    #[error("ill-conditioned point: {0}")]
    IllConditioned(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("branch selection failed: {0}")]
    BranchSelection(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),

    #[error("unknown identity id: {0}")]
    UnknownIdentity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn precision(what: impl Into<String>) -> Self {
        Error::PrecisionFailure { what: what.into(), n: None }
    }

    pub fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidArgument(what.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
