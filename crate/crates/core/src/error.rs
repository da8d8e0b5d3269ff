use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at linear offset {0}")]
    NonFinite(usize),

    #[error("inverse transform left an imaginary residue of relative size {0:e}")]
    NonNegligibleImaginaryPart(f64),

    #[error("slice SVD did not converge in Fourier slice {0}")]
    NumericalFailure(usize),

    #[error("rank {rank} outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("measurement map is numerically rank deficient")]
    RankDeficientMap,

    #[error("sampling mask would be empty")]
    EmptyMask,

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("dense map of {rows}x{cols} exceeds the {limit} entry limit")]
    MapTooLarge { rows: usize, cols: usize, limit: usize },

    #[error("residual increased from {prev:e} to {next:e} at iteration {iter}")]
    DivergenceDetected { iter: usize, prev: f64, next: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
