use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape not supported for this operation: {0}")]
    UnsupportedShape(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("no interior cells in the discrete domain")]
    EmptyDomain,
    #[error("sphere of radius {radius} leaves the field's domain")]
    SphereOutsideDomain { radius: f64 },
    #[error("point {0:?} is outside the active nodes of the field")]
    OutsideField(Vec<f64>),
    #[error("dirichlet value missing at a boundary cut")]
    MissingBoundaryData,
    #[error("fundamental solution needs a + k > 1, got a + k = {0}")]
    DegenerateDimension(f64),
    #[error("fundamental solution evaluated at its pole")]
    PoleEvaluation,
    #[error("one-sided boundary stencil leaves the domain at sample {0}")]
    StencilLeavesDomain(usize),
    #[error("polynomial is not even in variable {0}")]
    ParityViolation(usize),
    #[error("least-squares normal equations are rank deficient")]
    DegenerateFit,
    #[error("solver did not converge in {max_iter} iterations (relative residual {residual:e})")]
    NoConvergence {
        max_iter: usize,
        residual: f64,
        best: Vec<f64>,
        iterations: usize,
    },
    #[error("krylov breakdown after {iterations} iterations")]
    BreakdownDetected { iterations: usize, best: Vec<f64> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
