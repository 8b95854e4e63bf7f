use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask has no stored pixels")]
    EmptyMask,

    #[error("problem has no interior (unknown) pixels")]
    EmptyInterior,

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("multigrid did not converge in {cycles} cycles (relative residual {residual:.3e})")]
    IterationBudgetExceeded { cycles: usize, residual: f64 },

    #[error("dense oracle size cap exceeded: {size} unknowns > {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("coarse operator is not positive definite")]
    NotPositiveDefinite,

    #[error("bad magic bytes")]
    BadMagic,

    #[error("truncated stream: {0}")]
    TruncatedStream(String),

    #[error("inflate error: {0}")]
    InflateError(String),

    #[error("malformed container: {0}")]
    MalformedContainer(String),

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("unsupported maxval {0} (only 8-bit images are supported)")]
    UnsupportedMaxval(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
