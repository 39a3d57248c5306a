//! Universal reduced-operator method for composite variational inequalities.
//!
//! The crate is organised bottom-up:
//!
//! - [`space`], [`set`], [`oracle`], [`problem`]: metric spaces, feasible sets,
//!   operator oracles and the problem container.
//! - [`curvature`]: point-wise curvature, global curvature bound profiles,
//!   integral smoothings and their property checks.
//! - [`step`]: the doubly regularized subproblem and the reduced operator.
//! - [`solver`]: the outer method with its line search and certificates.
//! - [`benchmarks`]: instances with known curvature and solutions.

pub mod benchmarks;
pub mod curvature;
pub mod error;
pub mod oracle;
pub mod problem;
pub mod set;
pub mod solver;
pub mod space;
pub mod step;

pub use error::{Error, Result};
pub use oracle::OperatorOracle;
pub use problem::CompositeVI;
pub use set::FeasibleSet;
pub use space::EuclideanSpace;

pub use nalgebra::{DMatrix, DVector};
