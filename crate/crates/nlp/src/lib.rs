//! Primal-dual interior-point solver for sparse nonlinear programs.
//!
//! Problems have the form
//!
//! ```text
//! min f(x)  s.t.  c_l <= c(x) <= c_u,  x_l <= x <= x_u
//! ```
//!
//! and are supplied either through the [`NlpProblem`] trait or built from
//! small automatically differentiated pieces with [`model::Model`].

pub mod ipm;
pub mod model;
pub mod problem;
pub mod sparse;

pub use ipm::{solve, SolveResult, SolverOptions, Status};
pub use model::{CompiledModel, Element, Model};
pub use problem::NlpProblem;

/// Errors raised by the linear algebra or by malformed problems.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NlpError {
    #[error("singular KKT matrix")]
    SingularMatrix,
    #[error("problem dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("function evaluation returned a non-finite value")]
    NonFinite,
}
