//! Linear finite elements on boundary-concentrated meshes.
//!
//! The crate builds graded triangulations of sector domains by newest-vertex
//! bisection, solves the Poisson problem with linear elements, approximates
//! the boundary flux in the classical and in the variational sense, and
//! solves an `L²`-regularized Dirichlet boundary control problem.

// Index loops mirror the matrix notation; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod domain;
pub mod error;
pub mod fem;
pub mod flux;
pub mod manufactured;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod sparse;
pub mod study;

pub use control::{ControlOperator, ControlProblem, ControlSolution, KrylovStats};
pub use domain::{Point, SectorDomain};
pub use error::{Error, Result};
pub use fem::{DofMap, FeFunction, PoissonSolver, SparseSystem};
pub use flux::{BoundaryFunction, BoundaryMass, BoundaryValues, EdgeFlux};
pub use manufactured::{control_bench, flux_bench, ControlBenchmark, FluxBenchmark};
pub use mesh::{BoundaryEdge, GradingMode, GradingPolicy, GradingStats, Mesh, MeshDump, Triangle};
pub use quadrature::{EdgeRule, QuadratureRule, QuadratureScheme};
pub use report::{Experiment, ExperimentReport, LevelDiagnostics, LevelRow, ReportFormat};
pub use solver::{GmresConfig, GmresOutcome, SolverKind, SpdSolver};
pub use sparse::CsrMatrix;
pub use study::{run_control_study, run_flux_study, run_study, ExperimentConfig};
