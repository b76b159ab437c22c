use thiserror::Error;

/// Errors raised by the verification toolkit.
///
/// Check *failures* (a residual above tolerance) are not errors: they are
/// reported through the `pass` flag of the corresponding report. The variants
/// below signal that a check could not be carried out as requested.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("evaluation inside the singular locus: {0}")]
    SingularLocus(String),
    #[error("expression exceeds the node budget ({0} nodes)")]
    NodeBudgetExceeded(usize),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("symbol is not smooth on the normal axis: {0}")]
    SingularAtAxis(String),
    #[error("regression ill-conditioned: {0}")]
    RegressionIllConditioned(String),
    #[error("map does not preserve the boundary (worst residual {0:e})")]
    NotBoundaryPreserving(f64),
    #[error("induced boundary map is not a cotangent lift (worst residual {0:e})")]
    NotFiberLinear(f64),
    #[error("phase depends on the normal covariable at the boundary (worst residual {0:e})")]
    NotBoundaryFlat(f64),
    #[error("mixed normal derivative changes sign on the grid")]
    SignChange,
    #[error("cutoff scale k = {k} exceeds half the collar width {half_width}")]
    CollarExceeded { k: f64, half_width: f64 },
    #[error("calibration exhausted after {0} trials")]
    CalibrationExhausted(usize),
    #[error("quadrature budget exhausted: {0}")]
    QuadratureBudget(String),
    #[error("integrand decay class unsupported: {0}")]
    DecayClassUnsupported(String),
    #[error("derivative unavailable: {0}")]
    DerivativeUnavailable(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Validation(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
