use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Conditioning on a subset whose probability is numerically zero.
    #[error("singular conditioning: condition number estimate {0:.3e} exceeds threshold")]
    SingularConditioning(f64),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("exact sampling supports alpha = 1 only (got alpha = {0})")]
    UnsupportedExponent(f64),

    #[error("chain initialization failed: {0}")]
    Initialization(String),

    #[error("divergence at iteration {iter}: {msg}")]
    Divergence { iter: usize, msg: String },

    #[error("budget error: {0}")]
    Budget(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code family: 1 config/parse, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidParameter(_)
            | Error::Budget(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
