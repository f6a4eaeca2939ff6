use thiserror::Error;

/// Errors raised across the crate. Variants map one-to-one onto the failure
/// modes of the public operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid spectral measure: {0}")]
    InvalidSpectralMeasure(String),
    #[error("argument {value} outside the domain [{lower}, inf)")]
    OutOfDomain { value: f64, lower: f64 },
    #[error("balancing function undefined: {0}")]
    BalancingUndefined(String),
    #[error("incompatible measures: {0}")]
    IncompatibleMeasures(String),
    #[error("measure must be normalized first (total mass {0})")]
    MustNormalizeFirst(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cap boundary passes through an atom direction (cosine {0})")]
    CapBoundaryTie(f64),
    #[error("convergence condition failed: {0}")]
    ConvergenceConditionFailed(String),
    #[error("stochastic recurrence is not contractive: {0}")]
    SreNoncontractive(String),
    #[error("non-contractive chain: (1 - a)^2 = {lhs} <= b^2 = {rhs}")]
    NoncontractiveChain { lhs: f64, rhs: f64 },
    #[error("model has not passed the condition checker and carries no override")]
    RefuseToSample,
    #[error("grid too deep: {expected:.1} exceedances expected at u = {u}; raise n_sims to at least {required_sims} or use a shallower grid")]
    GridTooDeep {
        u: f64,
        expected: f64,
        required_sims: u64,
    },
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("incomparable estimate and constant: {0}")]
    Incomparable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
