use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient local data: {n_local} observations in window, basis needs {dim}")]
    InsufficientLocalData { n_local: usize, dim: usize },
    #[error("singular Gram matrix (condition number {cond:.3e})")]
    SingularGram { cond: f64 },
    #[error("singular block in partitioned variance (condition number {cond:.3e})")]
    SingularBlock { cond: f64 },
    #[error("degenerate variance {var:.3e}")]
    DegenerateVariance { var: f64 },
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("empty subgroup: {0}")]
    EmptySubgroup(String),
    #[error("nonpositive estimated complier share {0:.4}")]
    NonpositiveShare(f64),
    #[error("all grid points failed")]
    AllPointsFailed,
}

impl Error {
    /// True for failures caused by the numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_) | Error::Unsupported(_) | Error::EmptySubgroup(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
