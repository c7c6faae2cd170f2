use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("matrix has {actual} entries, expected {rows}x{cols}")]
    BadShape {
        rows: usize,
        cols: usize,
        actual: usize,
    },

    #[error("non-finite entry produced by {op}")]
    NonFinite { op: &'static str },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("innovation covariance is singular (reciprocal condition estimate {rcond:e})")]
    SingularInnovation { rcond: f64 },

    #[error("transition product requested for k2 = {k2} < k1 - 1 (k1 = {k1})")]
    InvalidTransitionRange { k1: usize, k2: usize },

    #[error("horizon must be at least 1")]
    EmptyHorizon,

    #[error("remote update inconsistent: gamma = {gamma} but payload {}", if *.payload_present { "present" } else { "absent" })]
    PayloadMismatch { gamma: bool, payload_present: bool },

    #[error("variance schedule covers k <= {covered}, but k = {requested} was requested")]
    ScheduleTooShort { covered: usize, requested: usize },

    #[error("decision ledger committed through {frontier}, but {required} is required")]
    LedgerGap { frontier: usize, required: usize },

    #[error("cost schedule has no entry for k = {k} (table length {len})")]
    CostOutOfRange { k: usize, len: usize },

    #[error("invalid communication cost {0}: must be finite and nonnegative")]
    InvalidCost(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("variance signal is negative ({value:e}) beyond tolerance")]
    NegativeVarianceSignal { value: f64 },

    #[error("Riccati iteration did not converge within {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("Monte Carlo run {run} (seed {seed}) failed: {source}")]
    RunFailed {
        run: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}
