//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Typed failures. The variant name is part of the CLI contract: it is
/// printed on standard error and mapped to an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),

    #[error("FormatError: {0}")]
    Format(String),

    #[error("TruncationError: {0}")]
    Truncation(String),

    #[error("LabelCodeError: {0}")]
    LabelCode(String),

    #[error("ValueError: {0}")]
    Value(String),

    #[error("ParamError: {0}")]
    Param(String),

    #[error("InsufficientData: {0}")]
    InsufficientData(String),

    #[error("EmptyCluster: {0}")]
    EmptyCluster(String),

    #[error("NumericalError: {0}")]
    Numerical(String),
}

/// Coarse category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    /// The stable name of the variant, e.g. `"IoError"`.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::Io(_) => "IoError",
            Error::Format(_) => "FormatError",
            Error::Truncation(_) => "TruncationError",
            Error::LabelCode(_) => "LabelCodeError",
            Error::Value(_) => "ValueError",
            Error::Param(_) => "ParamError",
            Error::InsufficientData(_) => "InsufficientData",
            Error::EmptyCluster(_) => "EmptyCluster",
            Error::Numerical(_) => "NumericalError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Param(_) => ErrorClass::Usage,
            Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
