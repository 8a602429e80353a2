use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KimuraError {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: last estimates {previous:e} and {last:e} (tolerance {tol:e})")]
    Convergence { previous: f64, last: f64, tol: f64 },

    /// A root bracket could not be located.
    #[error("no sign change found while scanning [{from}, {to}]")]
    Search { from: f64, to: f64 },

    /// The continuous model is inconsistent (e.g. an unbounded potential).
    #[error("model error: {0}")]
    Model(String),

    /// A factorisation or solve broke down.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An internal self-check failed.
    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    /// Not enough spectral data to form a reliable fit.
    #[error("insufficient spectrum: {0}")]
    InsufficientSpectrum(String),

    /// A probe window contains a vanishing infimum.
    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    /// A sampled kernel value was not positive.
    #[error("positivity violated: {0}")]
    Positivity(String),

    /// Mismatched or unsupported configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Requested an operator shape that is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A Monte Carlo step produced a non-finite state.
    #[error("step-size error: {0}")]
    StepSize(String),
}

pub type Result<T> = std::result::Result<T, KimuraError>;

pub(crate) fn domain(msg: impl Into<String>) -> KimuraError {
    KimuraError::Domain(msg.into())
}
