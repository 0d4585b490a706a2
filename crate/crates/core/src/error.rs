use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("diffusion coefficient {value} on triangle {triangle} is not positive")]
    EllipticityViolation { triangle: usize, value: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("reference vector has zero Gram norm")]
    DivisionByZero,
    #[error("reference solution of record {index} has zero Gram norm")]
    DegenerateReference { index: usize },
    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
