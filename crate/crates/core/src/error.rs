use thiserror::Error;

/// Errors raised by mesh construction, assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("opening angle {0} rad is outside [pi/2, 2pi)")]
    InvalidAngle(f64),

    #[error("triangle index {index} out of range for a mesh with {count} triangles")]
    TriangleIndex { index: usize, count: usize },

    #[error("grading policy did not reach a fixpoint within {rounds} refinement rounds")]
    GradingDiverged { rounds: usize },

    #[error("mesh grew to {count} triangles, above the configured cap of {cap}")]
    ElementCap { count: usize, cap: usize },

    #[error("triangle {0} is degenerate (non-positive area)")]
    DegenerateTriangle(usize),

    #[error("source term is not finite at a quadrature point of triangle {element}")]
    NonFiniteSource { element: usize },

    #[error("boundary field is not finite at a quadrature point of boundary edge {edge}")]
    NonFiniteBoundary { edge: usize },

    #[error("linear solver stopped after {iterations} iterations at relative residual {residual:e}")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("GMRES stagnated after {iterations} iterations at relative residual {residual:e}")]
    GmresStagnated {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("interior residual {residual:e} exceeds tolerance {tolerance:e}")]
    InteriorResidual { residual: f64, tolerance: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
