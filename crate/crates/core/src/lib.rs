//! Quasi-Newton deterministic policy gradient.
//!
//! The crate estimates the gradient and a model-free approximate Hessian of the
//! closed-loop performance `J(θ)` of a deterministic policy from rollouts, and
//! uses them in Newton-type parameter updates. A closed-form scalar LQR model
//! provides ground truth for every estimated quantity, including the
//! model-dependent curvature term that the approximation drops.
//!
//! Module map:
//!
//! - [`linalg`]: rank-3 tensor contraction, SPD solves, eigenvalue bounds.
//! - [`policy`]: deterministic policy families with exact parameter derivatives.
//! - [`env`]: sampling-only MDPs (scalar LQR, cart-pendulum).
//! - [`lqr`]: analytic ground truth for the scalar LQR problem.
//! - [`estimators`]: Monte-Carlo gradient, Hessian and Fisher estimates.
//! - [`optimizer`]: update rules, learning loop, convergence diagnostics.
//! - [`verify`]: the LQR consistency suite shared by tests and the CLI.

pub mod env;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod lqr;
pub mod optimizer;
pub mod policy;
pub mod rng;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{SymMatrix, Tensor3};
pub use policy::{ParamVector, Policy};
