use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),

    #[error("linear solver did not converge: {iterations} iterations, residual {residual:.3e} (target {target:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("simulation step {step} failed in phase {phase}: {source}")]
    StepFailed {
        step: usize,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the coupled-loop step/phase context.
    pub fn in_step(self, step: usize, phase: &'static str) -> Self {
        Error::StepFailed {
            step,
            phase,
            source: Box::new(self),
        }
    }
}
