//! Consistency suite for the closed-form LQR model.
//!
//! Each check compares two independent routes to the same quantity: algebraic
//! identities between closed forms, finite differences of `J`, and direct
//! quadrature of the Gaussian-kernel integrals.

use serde::Serialize;

use crate::env::LqrConfig;
use crate::error::Result;
use crate::lqr::{self, quadrature};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation (or the tested gap).
    pub observed: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// 50-point grid on `[0.2, 1.5]`.
pub fn theta_grid() -> Vec<f64> {
    (0..50).map(|i| 0.2 + 1.3 * i as f64 / 49.0).collect()
}

pub const IDENTITY_REL_TOL: f64 = 1e-10;
pub const FD_HESSIAN_STEP: f64 = 1e-4;
pub const FD_HESSIAN_REL_TOL: f64 = 1e-5;
pub const FD_GRADIENT_STEP: f64 = 1e-5;
pub const FD_GRADIENT_TOL: f64 = 1e-6;
pub const LAMBDA_AT_OPTIMUM_TOL: f64 = 1e-10;
pub const H_AT_OPTIMUM_TOL: f64 = 1e-8;
pub const FISHER_MIN_REL_GAP: f64 = 0.1;
pub const LAMBDA_QUADRATURE_TOL: f64 = 1e-4;
pub const PG_CONSISTENCY_TOL: f64 = 1e-12;

fn outcome(name: &'static str, observed: f64, tolerance: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: observed < tolerance,
        observed,
        tolerance,
        detail,
    }
}

/// `max_θ |J'' - (H + γΛ)| / max(1, |J''|)` over the grid.
pub fn hessian_identity_residual(cfg: &LqrConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for theta in theta_grid() {
        let c = lqr::curvature(theta, cfg)?;
        let r = (c.d2j_exact - (c.h + cfg.gamma * c.lambda)).abs() / c.d2j_exact.abs().max(1.0);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// `max_θ |J'' - FD₂(J)| / max(1, |J''|)` over the grid.
pub fn hessian_fd_residual(cfg: &LqrConfig) -> Result<f64> {
    let h = FD_HESSIAN_STEP;
    let mut worst: f64 = 0.0;
    for theta in theta_grid() {
        let fd = (lqr::performance(theta + h, cfg)? - 2.0 * lqr::performance(theta, cfg)?
            + lqr::performance(theta - h, cfg)?)
            / (h * h);
        let exact = lqr::exact_hessian(theta, cfg)?;
        worst = worst.max((exact - fd).abs() / exact.abs().max(1.0));
    }
    Ok(worst)
}

pub fn gradient_fd_residual(cfg: &LqrConfig) -> Result<f64> {
    let h = FD_GRADIENT_STEP;
    let mut worst: f64 = 0.0;
    for theta in theta_grid() {
        let fd = (lqr::performance(theta + h, cfg)? - lqr::performance(theta - h, cfg)?) / (2.0 * h);
        worst = worst.max((lqr::gradient(theta, cfg)? - fd).abs());
    }
    Ok(worst)
}

/// `E_s[∇_θπ ∇_aQ]` assembled from `E_s[s²]` and the analytic `∇_aQ`,
/// compared with `J'` on the grid.
pub fn policy_gradient_residual(cfg: &LqrConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for theta in theta_grid() {
        // ∇_θπ = -s, a = -θs, and ∇_aQ is linear in s: E_s[-s ∇_aQ] = -∇_aQ(1, -θ) E_s[s²]
        let dq = lqr::q_action_gradient(1.0, -theta, theta, cfg)?;
        let pg = -dq * lqr::expected_s2(theta, cfg)?;
        let exact = lqr::gradient(theta, cfg)?;
        worst = worst.max((pg - exact).abs() / exact.abs().max(1.0));
    }
    Ok(worst)
}

pub fn run_lqr_suite(cfg: &LqrConfig) -> Result<Vec<CheckOutcome>> {
    cfg.validate()?;
    let mut out = Vec::new();

    out.push(outcome(
        "hessian_identity",
        hessian_identity_residual(cfg)?,
        IDENTITY_REL_TOL,
        "J'' = H + γΛ on 50 points in [0.2, 1.5], relative".into(),
    ));
    out.push(outcome(
        "hessian_vs_finite_differences",
        hessian_fd_residual(cfg)?,
        FD_HESSIAN_REL_TOL,
        format!("J'' vs second central difference of J, h = {FD_HESSIAN_STEP:e}, relative"),
    ));
    out.push(outcome(
        "gradient_vs_finite_differences",
        gradient_fd_residual(cfg)?,
        FD_GRADIENT_TOL,
        format!("J' vs central difference of J, h = {FD_GRADIENT_STEP:e}, absolute"),
    ));
    out.push(outcome(
        "policy_gradient_consistency",
        policy_gradient_residual(cfg)?,
        PG_CONSISTENCY_TOL,
        "E_s[∇π ∇_aQ] vs J'".into(),
    ));

    let ts = lqr::theta_star(cfg);
    let c = lqr::curvature(ts, cfg)?;
    out.push(outcome(
        "stationarity_at_optimum",
        c.dj.abs(),
        1e-10,
        format!("|J'(θ*)| with θ* = {ts:.10}"),
    ));
    out.push(outcome(
        "lambda_vanishes_at_optimum",
        c.lambda.abs(),
        LAMBDA_AT_OPTIMUM_TOL,
        "|Λ(θ*)|".into(),
    ));
    out.push(outcome(
        "h_matches_hessian_at_optimum",
        (c.h - c.d2j_exact).abs(),
        H_AT_OPTIMUM_TOL,
        "|H(θ*) - J''(θ*)|".into(),
    ));
    let gap = (c.fisher - c.d2j_exact).abs() / c.d2j_exact.abs();
    out.push(CheckOutcome {
        name: "fisher_differs_from_hessian_at_optimum",
        passed: gap > FISHER_MIN_REL_GAP,
        observed: gap,
        tolerance: FISHER_MIN_REL_GAP,
        detail: format!("|F(θ*) - J''(θ*)| / J''(θ*), required above tolerance; F = {:.6}, J'' = {:.6}", c.fisher, c.d2j_exact),
    });

    let mut worst_lambda: f64 = 0.0;
    for theta in [0.5, 1.2] {
        let numeric = lqr::lambda_term_numeric(theta, cfg)?;
        worst_lambda = worst_lambda.max((numeric - lqr::lambda_term(theta, cfg)?).abs());
    }
    out.push(outcome(
        "lambda_by_quadrature",
        worst_lambda,
        LAMBDA_QUADRATURE_TOL,
        if cfg.sigma_sq > 0.0 {
            "Λ from nested quadrature of the Gaussian-kernel integral at θ ∈ {0.5, 1.2}".into()
        } else {
            "Λ from the noise-free kernel limit at θ ∈ {0.5, 1.2}".into()
        },
    ));

    let mut worst_moment: f64 = 0.0;
    for &(a, b, c) in &[(0.3, 0.8, 1.5), (-2.0, -1.1, 0.4), (5.0, 2.0, 3.0)] {
        let closed = quadrature::gaussian_moment_identity(b, c);
        let numeric = quadrature::gaussian_moment_numeric(a, b, c);
        worst_moment = worst_moment.max((closed - numeric).abs() / closed.abs().max(1.0));
    }
    out.push(outcome(
        "gaussian_moment_identity",
        worst_moment,
        1e-9,
        "∫(x²+a)(x-b)exp(-c(x-b)²)dx = √π b / c^{3/2}".into(),
    ));

    let mut worst_bellman: f64 = 0.0;
    for &(s, theta) in &[(0.4, 0.3), (-1.3, 0.9), (2.0, 1.4)] {
        let v = lqr::value_function(s, theta, cfg)?;
        let q = lqr::q_function(s, -theta * s, theta, cfg)?;
        worst_bellman = worst_bellman.max((v - q).abs() / v.abs().max(1.0));
    }
    out.push(outcome(
        "bellman_v_equals_q_on_policy",
        worst_bellman,
        1e-12,
        "V(s) = Q(s, π_θ(s))".into(),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let results = run_lqr_suite(&LqrConfig::default()).unwrap();
        for r in &results {
            assert!(r.passed, "{} failed: observed {:e}", r.name, r.observed);
        }
        assert_eq!(results.len(), 11);
    }

    #[test]
    fn noise_free_suite_passes() {
        let cfg = LqrConfig { sigma_sq: 0.0, ..LqrConfig::default() };
        for r in run_lqr_suite(&cfg).unwrap() {
            assert!(r.passed, "{} failed: observed {:e}", r.name, r.observed);
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = theta_grid();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 0.2).abs() < 1e-15 && (g[49] - 1.5).abs() < 1e-15);
    }
}
