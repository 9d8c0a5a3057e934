use std::fmt;

use thiserror::Error;

/// One violated rule found while validating raw instance data.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    DimensionMismatch { what: String, expected: usize, found: usize },
    NonFiniteEntry { what: String },
    EmptyPolytopeRow { row: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::DimensionMismatch { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            ValidationIssue::NonFiniteEntry { what } => write!(f, "non-finite entry in {what}"),
            ValidationIssue::EmptyPolytopeRow { row } => {
                write!(f, "row {row} has a zero normal and a negative right-hand side")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum RdoError {
    #[error("invalid instance: {}", join_issues(.0))]
    Validation(Vec<ValidationIssue>),

    #[error("origin is not in the interior of P (b[{row}] = {value})")]
    OriginNotInterior { row: usize, value: f64 },

    #[error("product cap exceeded: {requested} products requested, cap is {cap}")]
    ProductCapExceeded { requested: u128, cap: usize },

    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,

    #[error("dynamics are not stable enough: spectral radius {rho}")]
    UnstableDynamics { rho: f64 },

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("quadratic constraint {index} is not convex (min eigenvalue {min_eig})")]
    NonConvexQuadratic { index: usize, min_eig: f64 },

    #[error("conic solver failed: {0}")]
    Numerical(String),

    #[error("polytope is empty")]
    EmptyPolytope,

    #[error("outer set S_{r} is empty")]
    EmptyOuterSet { r: usize },

    #[error("polytope is unbounded")]
    UnboundedPolytope,

    #[error("spectral radius {rho} exceeds rho_star = {rho_star}")]
    RhoStarViolated { rho: f64, rho_star: f64 },

    #[error("invalid invariant set: {0}")]
    InvalidInvariantSet(String),

    #[error("path-complete LMIs infeasible at the max-norm bound {norm_bound}; use it as the upper bound")]
    BracketFailure { norm_bound: f64 },

    #[error("path-complete LMIs are infeasible at level l = {l}")]
    InfeasibleLevel { l: usize },

    #[error("operation needs a single dynamics matrix, found s = {s}")]
    RequiresSingleMatrix { s: usize },

    #[error("ledger row breaks monotonicity: {0}")]
    LedgerViolation(String),

    #[error("unknown solver backend '{0}'")]
    UnknownBackend(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, RdoError>;
