use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsorted base points")]
    UnsortedBasePoints,

    #[error("degenerate pair: base points coincide")]
    DegeneratePair,

    #[error("projection did not converge after {sweeps} sweeps (max violation {max_violation:e})")]
    ProjectionNotConverged { sweeps: usize, max_violation: f64 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (gradient residual {gradient_residual:e}, EL residual {el_residual:e})"
    )]
    SolverNotConverged {
        iterations: usize,
        gradient_residual: f64,
        el_residual: f64,
    },

    #[error("internal energy is infinite: {0}")]
    InfiniteEnergy(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("time {t} outside the step interval [0, {tau}]")]
    OutOfRange { t: f64, tau: f64 },

    #[error("signed measure has nonzero total {0:e}")]
    NonzeroTotal(f64),

    #[error("step {step} failed: {source}")]
    Step { step: usize, source: Box<Error> },
}

impl Error {
    /// Short stable identifier, used for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidState(_) => "invalid-state",
            Error::InvalidInput(_) => "invalid-input",
            Error::UnsortedBasePoints => "unsorted-base-points",
            Error::DegeneratePair => "degenerate-pair",
            Error::ProjectionNotConverged { .. } => "projection-not-converged",
            Error::SolverNotConverged { .. } => "solver-not-converged",
            Error::InfiniteEnergy(_) => "infinite-energy",
            Error::DegenerateMesh(_) => "degenerate-mesh",
            Error::Unsupported(_) => "unsupported",
            Error::OutOfRange { .. } => "out-of-range",
            Error::NonzeroTotal(_) => "nonzero-total",
            Error::Step { .. } => "step-failed",
        }
    }
}
