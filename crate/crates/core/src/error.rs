use thiserror::Error;

/// Errors raised by the analytic and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver hit its iteration cap.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// An integrand or sample evaluated to NaN or infinity.
    #[error("non-finite {what} at t = {t:e}")]
    NonFinite { what: &'static str, t: f64 },

    /// Two waveforms defined on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The correlation peak has (numerically) zero curvature.
    #[error("flat correlation peak: |integral of lambda * w''| = {curvature:e}")]
    FlatPeak { curvature: f64 },

    /// The correlator does not peak at zero shift.
    #[error(
        "stationarity violated: integral of lambda * w' = {value:e} (tolerance {tolerance:e})"
    )]
    NotStationary { value: f64, tolerance: f64 },

    /// The noise kernel could not be inverted.
    #[error("singular noise kernel (condition estimate {condition:e})")]
    SingularKernel { condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
