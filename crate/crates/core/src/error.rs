use alloc::string::String;

/// Errors raised by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("gate {gate} is defined for {expected} qubits, got {got}")]
    GateQubitMismatch {
        gate: String,
        expected: usize,
        got: usize,
    },
    #[error("phase index {index} out of range for dimension {dim}")]
    PhaseIndex { index: usize, dim: usize },
    #[error("control time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("cannot resample onto a longer interval ({new} > {old})")]
    ResampleLonger { old: f64, new: f64 },
    #[error("phase-independent gradient undefined: |Tr(W^dag U_T)| = {0:e}")]
    PhaseSingularity(f64),
    #[error("non-finite gradient at s = {s}")]
    NonFiniteGradient { s: f64 },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("noise correlation matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("first optimization at T = {t} reached only {objective:e} (stop value {stop:e})")]
    FirstStepFailed { t: f64, objective: f64, stop: f64 },
    #[error("front not exhausted: every point reached the threshold")]
    FrontNotExhausted,
    #[error("no point of the trajectory reached the threshold")]
    NoConvergedPoint,
    #[error("regression needs at least two distinct positive points")]
    DegenerateRegression,
}

pub type Result<T> = core::result::Result<T, Error>;
