//! Numerical tolerances and default constants, collected in one place.

/// Absolute accuracy of [`crate::linalg::min_eigenvalue`] for `n > 2`.
pub const EIGEN_ABS_TOL: f64 = 1e-10;

/// Guard on the LQR stability denominator `1 - γ(1-θ)²`.
pub const LQR_STABILITY_EPS: f64 = 1e-9;

/// Interval width at which the regularization weight bisection stops.
pub const BETA_BISECTION_TOL: f64 = 1e-6;

/// Gradient norm below which oracle-driven learning stops.
pub const ORACLE_GRAD_STOP: f64 = 1e-10;

/// Default action finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-2;

/// Convergence-ratio threshold of the superlinear diagnostic.
pub const SUPERLINEAR_RATIO: f64 = 0.1;

/// Errors at or below this are at working precision; the superlinear
/// diagnostic ignores them.
pub const DIAGNOSTIC_ERROR_FLOOR: f64 = 1e-13;

/// Relative tolerance of the Gaussian-kernel quadrature.
pub const QUADRATURE_REL_TOL: f64 = 1e-12;
