use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QvError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} out of supported range {1}")]
    DimensionOutOfRange(usize, &'static str),

    #[error("state not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("determinant {0} is not 1")]
    NotSpecial(String),

    #[error("channel is not trace preserving (max deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("classifiers use different reference states")]
    MismatchedReferences,

    #[error("unsupported classifier family: {0}")]
    UnsupportedClassifier(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, QvError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QvError::DimensionMismatch { expected, found })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> QvError {
    QvError::InvalidArgument(msg.into())
}
