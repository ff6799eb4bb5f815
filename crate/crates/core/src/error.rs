use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel failed validation: {0}")]
    UnvalidatedKernel(String),
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("supplementary-series parameter c = {0} is not supported (principal series only)")]
    SupplementarySeries(num_complex::Complex64),
    #[error("angular momentum {0} exceeds the supported maximum {1}")]
    SpinTooLarge(f64, f64),
    #[error("rapidity shift moves the state off the grid (escaped weight {0:e})")]
    SupportEscapes(f64),
    #[error("spacetime grid aliases the state: {0}")]
    Aliasing(String),
    #[error("basis is not orthonormal (max deviation {0:e})")]
    NonOrthonormalBasis(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
