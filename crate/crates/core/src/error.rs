use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyqError {
    #[error("invalid Fock cutoff {0}: a qumode needs cutoff >= 1")]
    InvalidCutoff(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("wire {0} appears more than once")]
    DuplicateTarget(usize),
    #[error("wire {wire} out of range for a {len}-wire register")]
    WireOutOfRange { wire: usize, len: usize },
    #[error("wire {wire} has the wrong kind: {expected} expected")]
    WrongWireKind { wire: usize, expected: &'static str },
    #[error("empty wire set")]
    EmptyWireSet,
    #[error("generator is not anti-Hermitian (max |G + G^dagger| = {0:e})")]
    NotAntiHermitian(f64),
    #[error("operator is not Hermitian (max |A - A^dagger| = {0:e})")]
    NotHermitian(f64),
    #[error("input not normalized (norm deviation {0:e})")]
    NotNormalized(f64),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("unknown gate kind: {0}")]
    UnknownGate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension {dim} exceeds the limit {limit}")]
    DimensionOverflow { dim: usize, limit: usize },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("unstable configuration: {0}")]
    Unstable(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, HyqError>;

impl From<serde_json::Error> for HyqError {
    fn from(e: serde_json::Error) -> Self {
        HyqError::Parse(e.to_string())
    }
}
