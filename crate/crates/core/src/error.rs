use thiserror::Error;

/// Errors raised by mesh handling, assembly, solvers and certification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("triangle {face} is degenerate (area {area:e})")]
    DegenerateTriangle { face: usize, area: f64 },

    #[error("edge ({a}, {b}) is shared by {count} triangles")]
    NonManifoldEdge { a: usize, b: usize, count: usize },

    #[error("edge ({a}, {b}) is traversed in the same direction by two triangles")]
    InconsistentOrientation { a: usize, b: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("field layout does not match the mesh: {0}")]
    FrameMismatch(String),

    #[error("every vertex is clamped; the system has no free degrees of freedom")]
    EmptySystem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigen iteration did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("not an escape candidate: decomposition residual {residual:e} exceeds {tol:e} at face {face}")]
    NotEscapeCandidate { face: usize, residual: f64, tol: f64 },

    #[error("vector field is not a certified escape field: {0}")]
    Uncertified(String),

    #[error("geodesic balls overlap and could not be separated: {0}")]
    OverlappingBalls(String),

    #[error("time horizon too short: estimated contraction norm {k_norm:.6} >= 1")]
    HorizonTooShort { k_norm: f64 },

    #[error("Neumann iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NeumannNotConverged { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
