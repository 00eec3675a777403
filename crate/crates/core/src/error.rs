use thiserror::Error;

/// Errors raised by the solver modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("utility is not concave: {0}")]
    NonConcave(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("quadrature did not converge: |I(2n) - I(n)| = {delta:e} at {nodes} nodes (value {value:e})")]
    Quadrature { delta: f64, nodes: usize, value: f64 },

    #[error("wealth {x} is outside the interior region (boundary {boundary})")]
    Region { x: f64, boundary: f64 },

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("unsupported constraint cone: {0}")]
    UnsupportedCone(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
