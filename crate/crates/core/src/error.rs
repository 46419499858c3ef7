use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The variants partition into four classes (see [`Error::class`]) which the
/// command-line front end maps onto process exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The inputs are well-formed but the formula leaves its valid range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input file. `line` is 1-based; 0 means "whole input".
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The design matrix is rank deficient.
    #[error("singular design: {0}")]
    Singular(String),

    /// Not enough distinct predictor values to identify the requested law.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Query lies outside the rectangular hull of a surface grid.
    #[error("({lr}, {bs}) is outside the surface hull; nearest corner is ({corner_lr}, {corner_bs})")]
    OutOfHull {
        lr: f64,
        bs: f64,
        corner_lr: f64,
        corner_bs: f64,
    },

    /// The surface is not a complete rectangular grid.
    #[error("surface shape error: {0}")]
    Shape(String),

    /// Every retry of a bootstrap resample produced a degenerate design.
    #[error("bootstrap failure: {0}")]
    BootstrapFailure(String),

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Argument,
    Domain,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_)
            | Error::Parse { .. }
            | Error::Shape(_)
            | Error::OutOfHull { .. }
            | Error::DegenerateDesign(_) => ErrorClass::Argument,
            Error::Domain(_) | Error::Singular(_) | Error::BootstrapFailure(_) => {
                ErrorClass::Domain
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
