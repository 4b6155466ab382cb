use thiserror::Error;

/// Errors raised by the library.
///
/// Variants that describe user input (`Spec`, `Pattern`, `UnsupportedXi`)
/// map to exit code 2 in the CLI; the numerical variants signal violated
/// preconditions or an implementation fault.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },

    #[error("invalid scenario at `{field}`: {message}")]
    Spec { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("spectrum condition violated: {0}")]
    Spectrum(String),

    #[error("iteration failed to converge: {0}")]
    Convergence(String),

    #[error("matrix is numerically singular: {0}")]
    SingularMatrix(String),

    #[error("target process has no closed-form conditional expectation: {0}")]
    UnsupportedXi(String),

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("discrete equilibrium system is singular: {0}")]
    SingularSystem(String),

    #[error("scenario does not match a closed-form corollary: {0}")]
    Pattern(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn spec(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }
}
