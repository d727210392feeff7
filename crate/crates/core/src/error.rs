use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its admissible range.
    #[error("invalid `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    /// The requested analysis does not support the configured nonlinearity.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// The trivial equilibrium never loses stability for the given parameters.
    #[error("no Hopf bifurcation: {0}")]
    NoHopf(String),

    /// Step size fell below the representable minimum.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String, last_state: Vec<f64> },

    /// Newton iteration did not converge; carries the residual history.
    #[error("Newton iteration diverged after {} iterations (last residual {:.3e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    NewtonDiverged { residuals: Vec<f64> },

    /// Any other numerical breakdown (singular matrix, failed eigen-solve, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain { field, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
