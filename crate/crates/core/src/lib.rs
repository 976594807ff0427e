//! Minimax D-optimal approximate designs for multi-response linear models.
//!
//! The design criterion is the largest log-determinant of the estimator's
//! covariance over a neighbourhood `{V : ‖V − V₀‖ ≤ α}` of the working error
//! covariance. Its closed form is a difference of two convex functions of the
//! design weights, minimized here by a DC algorithm ([`solver::solve_dc`]) and
//! checked with a first-order certificate ([`verify::certify`]).

pub mod basis;
pub mod criterion;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod space;
pub mod verify;

pub use basis::{BasisError, BasisExpr, BasisVector, Factor};
pub use criterion::{CriterionState, DesignProblem, Piece};
pub use linalg::{cholesky, Cholesky, LinalgError, Matrix, SymMatrix};
pub use model::{Estimator, ModelError, ResponseModel};
pub use solver::{solve_dc, solve_inner, init_weights, SolveError, SolveResult, SolverOptions};
pub use space::{DesignSpace, FactorSpec, OrbitStructure, SpaceError};
pub use verify::{certify, Certificate};
