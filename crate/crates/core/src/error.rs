//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the geometry, solver and derivative layers.
#[derive(Error, Debug)]
pub enum SkError {
    /// A point violates the domain constraints beyond the allowed tolerance.
    #[error("point outside domain: face {face} slack {slack:.3e} below -{tol:.1e}")]
    DomainViolation { face: usize, slack: f64, tol: f64 },

    /// The requested operation is not available for this problem configuration.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A structural assumption of the reflection data fails (projection map,
    /// linear independence, degenerate face set, ...).
    #[error("assumption violation: {0}")]
    Assumption(String),

    /// Face-set enumeration would exceed the supported budget.
    #[error("enumeration budget exceeded: {faces} faces (max {max})")]
    EnumerationBudget { faces: usize, max: usize },

    /// A constructed object fails its validation invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Local-time decomposition of a constraining-term increment failed.
    #[error("local-time decomposition failed at step {step}: residual {residual:.3e}")]
    Decomposition { step: usize, residual: f64 },

    /// An iterative routine did not converge within its budget.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// A limit computation produced inconsistent estimates.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SkError>;
