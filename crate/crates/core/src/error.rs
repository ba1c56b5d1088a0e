use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("coefficient {name} = {value} outside (0, 1]")]
    CoeffOutOfRange { name: &'static str, value: f64 },
    #[error("mode {mode} requires alpha == beta (got alpha={alpha}, beta={beta}); unequal coefficients collapse the generator")]
    DmdUnequalCoeffs {
        mode: &'static str,
        alpha: f64,
        beta: f64,
    },
    #[error("mode {mode}: {reason}")]
    ModeMismatch { mode: &'static str, reason: String },
    #[error("real-data triples are required when alpha < 1")]
    MissingRealBatch,
    #[error("unsupported path kind {kind} for {what}")]
    UnsupportedPath {
        kind: &'static str,
        what: &'static str,
    },
    #[error("quadrature window [{lo}, {hi}] holds only {mass} of the probability mass")]
    WindowTooNarrow { lo: f64, hi: f64, mass: f64 },
    #[error("empty sample set")]
    EmptySamples,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },
    #[error("stopped by observer: {0}")]
    Stopped(String),
}
