use thiserror::Error;

/// Everything that can go wrong across the library.
#[derive(Debug, Error)]
pub enum LqgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("cost matrices must be positive definite: {0}")]
    InvalidCost(String),
    #[error("control Riccati iteration did not stabilize: {0}")]
    NotStabilizable(String),
    #[error("filter Riccati iteration did not converge: {0}")]
    NotDetectable(String),
    #[error("singular covariance: {0}")]
    SingularCovariance(String),
    #[error("innovation covariance C S C' + Sigma_v is singular")]
    DegenerateInnovation,
    #[error("closed loop is not stable (spectral radius {0} >= 1)")]
    UnstableClosedLoop(f64),
    #[error("deflation delta too large: Sigma_nu - delta I is indefinite")]
    InvalidDelta,
    #[error("noise nondegeneracy violated: {0}")]
    NondegeneracyViolated(String),
    #[error("theta has length {got}, expected {expected}")]
    InvalidTheta { got: usize, expected: usize },
    #[error("operation requires {expected:?} mode, instance is {got:?}")]
    WrongMode {
        expected: crate::model::Mode,
        got: crate::model::Mode,
    },
    #[error("prior density is negative at x = {0}")]
    InvalidPrior(f64),
    #[error("K K' is nonsingular; bound requires an over-actuated gain")]
    NotOveractuated,
    #[error("A + B K is singular")]
    DegenerateClosedLoop,
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LqgError>;
