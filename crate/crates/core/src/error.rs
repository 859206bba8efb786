use thiserror::Error;

/// Errors produced by mesh generation, assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh refinement too coarse: max element diameter {max_h} is not below epsilon {epsilon}")]
    RefinementTooCoarse { max_h: f64, epsilon: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("coefficient is not uniformly elliptic: value {value} at ({x}, {y})")]
    EllipticityViolation { value: f64, x: f64, y: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("point ({x}, {y}) lies outside the mesh")]
    OutOfDomain { x: f64, y: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
