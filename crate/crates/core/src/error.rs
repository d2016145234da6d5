use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e} with error {error:e} after {subdivisions} subdivisions")]
    Convergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    /// The ODE step size collapsed below the resolution of the independent variable.
    #[error("step size underflow at t = {t:e} (tolerance too tight or parameters near sigma = 1 + 2 nu)")]
    StepUnderflow { t: f64 },

    /// The ODE integrator exceeded its step budget.
    #[error("step budget of {max_steps} exhausted at t = {t:e}")]
    TooManySteps { t: f64, max_steps: usize },

    /// A least-squares fit cannot be trusted (window too narrow, too few samples).
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
