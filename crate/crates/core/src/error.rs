use thiserror::Error;

/// Errors raised by the operators, map evaluators and the profile solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix or tensor shapes do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The profile blew up (g -> -inf) before the requested lower end of the grid.
    #[error("singularity reached at t = {last_t:e} (g = {last_g:.3})")]
    SingularityReached { last_t: f64, last_g: f64 },

    /// The integrator ran out of steps or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
