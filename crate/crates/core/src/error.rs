//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("left inverse inconsistent with regressor: {0}")]
    InconsistentInverse(String),
    #[error("not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("not symmetric: {0}")]
    NotSymmetric(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("inertia unsuitable for dualization: {0}")]
    WrongInertia(String),
    #[error("multipliers must be nonnegative")]
    NegativeMultiplier,
    #[error("inflation parameter must be positive")]
    NonPositiveEpsilon,
    #[error("samples do not share dimensions and disturbance bounds")]
    HeterogeneousSamples,
    #[error("singular disturbance weight: {0}")]
    SingularWeight(String),
    #[error("system is not Schur stable (spectral radius {0})")]
    Unstable(f64),
    #[error("set is unbounded: {0}")]
    Unbounded(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("solver unavailable: {0}")]
    SolverUnavailable(String),
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("operation requires a {0} set description")]
    WrongOrientation(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
