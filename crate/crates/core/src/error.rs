use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A least-squares fit did not converge.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// Time integration failed (step-size floor, trace drift, linear solver).
    #[error("integrator failure: {0}")]
    Integrator(String),

    /// A minimizer could not reach its stopping criterion.
    #[error("optimization failure: {0}")]
    Optimization(String),

    /// The Hessian at a stationary point has a negative eigenvalue.
    #[error("structural instability: {0}")]
    StructuralInstability(String),

    /// The objective returned a non-finite value.
    #[error("non-finite objective value {value} at point {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    /// A run did not fit in its time or evaluation budget.
    #[error("budget error: {0}")]
    Budget(String),

    /// Scenario or trace-file validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
