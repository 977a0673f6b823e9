use thiserror::Error;

/// Errors raised by the numerical kernels, simulators and analyses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal mass {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input is constant; rank statistic undefined")]
    ConstantInput,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("eigengap collapse at point (gap {gap:e})")]
    EigengapCollapse { gap: f64 },

    #[error("left the declared region at step {step}")]
    RegionExit { step: usize },

    #[error("reference flow stalled: tangential gradient {speed:e} below floor")]
    Stalled { speed: f64 },

    #[error("point is {dist} away from the trace (radius {radius})")]
    OffTrace { dist: f64, radius: f64 },

    #[error("divergence: loss {loss} above cap at step {step}")]
    Divergence { step: usize, loss: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
