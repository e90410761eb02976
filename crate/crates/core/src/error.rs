use alloc::string::String;
use core::fmt;

/// Error type shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor or array shapes that do not fit together.
    Dimension(String),
    /// A documented precondition of an operation was violated.
    Contract(String),
    /// Invalid configuration or hyper-parameters.
    Config(String),
    /// Malformed or insufficient input data.
    Data(String),
    /// A query outside the valid domain (e.g. extrapolation).
    Range(String),
    /// Geometry that has no well-defined answer (coincident or collinear points).
    DegenerateGeometry(String),
    /// NaN or infinite values where finite numbers are required.
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Range(m) => write!(f, "range error: {m}"),
            Error::DegenerateGeometry(m) => write!(f, "degenerate geometry: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
