use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("rank {requested} splits a complex-conjugate pair; use rank {suggested}")]
    ConjugateSplit { requested: usize, suggested: usize },
    #[error("top eigenvalues are not separated: |λ_{s}| ≈ |λ_{next}|", next = .s + 1)]
    NotSeparated { s: usize },
    #[error("near-defective eigenvalue block: {0}")]
    NearDefective(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }

    /// True for errors caused by user-supplied configuration rather than
    /// numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Invalid(_) | Error::Dimension(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
