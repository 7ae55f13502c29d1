//! Closed-form ground truth for the scalar LQR problem under `π_θ(s) = -θs`.
//!
//! With `D = 1 - γ(1-θ)²` and `C = σ₀² + γσ²/(1-γ)`, the value function is
//! `V(s) = p_θ s² + q_θ`. Every quantity below is defined on the stability
//! domain `D > 0` and fails with [`Error::UnstableParameter`] elsewhere.
//!
//! Expectations `E_s[·]` are unnormalized discounted sums `Σ_t γᵗ E[· at s_t]`.

pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::env::LqrConfig;
use crate::error::{Error, Result};
use crate::tolerances::{LQR_STABILITY_EPS, QUADRATURE_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrValueCoeffs {
    /// Quadratic coefficient `p_θ`.
    pub p: f64,
    /// Constant offset `q_θ`.
    pub q: f64,
}

/// Every curvature-related quantity at one `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrCurvature {
    pub theta: f64,
    pub j: f64,
    pub dj: f64,
    pub d2j_exact: f64,
    pub h: f64,
    pub lambda: f64,
    pub fisher: f64,
    pub expected_s2: f64,
}

pub fn denominator(theta: f64, cfg: &LqrConfig) -> f64 {
    1.0 - cfg.gamma * (1.0 - theta) * (1.0 - theta)
}

fn stable_denominator(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let d = denominator(theta, cfg);
    if d > LQR_STABILITY_EPS && theta.is_finite() {
        Ok(d)
    } else {
        Err(Error::UnstableParameter { theta, denominator: d })
    }
}

pub fn is_stable(theta: f64, cfg: &LqrConfig) -> bool {
    stable_denominator(theta, cfg).is_ok()
}

/// `C = σ₀² + γσ²/(1-γ)`.
pub fn noise_offset(cfg: &LqrConfig) -> f64 {
    cfg.sigma0_sq + cfg.gamma * cfg.sigma_sq / (1.0 - cfg.gamma)
}

/// Numerator of `J'`, whose positive root is `θ*`.
pub fn stationarity_numerator(theta: f64, gamma: f64) -> f64 {
    gamma * theta * theta + theta - gamma
}

pub fn value_coeffs(theta: f64, cfg: &LqrConfig) -> Result<LqrValueCoeffs> {
    let d = stable_denominator(theta, cfg)?;
    let p = 0.5 * (1.0 + theta * theta) / d;
    let q = cfg.gamma * cfg.sigma_sq * p / (1.0 - cfg.gamma);
    Ok(LqrValueCoeffs { p, q })
}

/// `dp_θ/dθ = (γθ² + θ - γ)/D²`.
pub fn value_coeff_derivative(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let d = stable_denominator(theta, cfg)?;
    Ok(stationarity_numerator(theta, cfg.gamma) / (d * d))
}

pub fn value_function(s: f64, theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let c = value_coeffs(theta, cfg)?;
    Ok(c.p * s * s + c.q)
}

pub fn q_function(s: f64, a: f64, theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let LqrValueCoeffs { p, q } = value_coeffs(theta, cfg)?;
    let g = cfg.gamma;
    Ok((0.5 + g * p) * s * s + 2.0 * g * p * s * a + (0.5 + g * p) * a * a + q)
}

/// `∂Q/∂a = 2γp s + (1 + 2γp) a`.
pub fn q_action_gradient(s: f64, a: f64, theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let p = value_coeffs(theta, cfg)?.p;
    Ok(2.0 * cfg.gamma * p * s + (1.0 + 2.0 * cfg.gamma * p) * a)
}

/// `∂²Q/∂a² = 1 + 2γp`, independent of `(s, a)`.
pub fn q_action_hessian(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let p = value_coeffs(theta, cfg)?.p;
    Ok(1.0 + 2.0 * cfg.gamma * p)
}

/// `J(θ) = p_θ C`.
pub fn performance(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    Ok(value_coeffs(theta, cfg)?.p * noise_offset(cfg))
}

/// `J'(θ) = (γθ² + θ - γ)/D² · C`.
pub fn gradient(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    Ok(value_coeff_derivative(theta, cfg)? * noise_offset(cfg))
}

/// `J''(θ) = p''_θ C`, with `p''_θ` obtained by differentiating `p_θ` twice:
/// `(2γ²θ³ + 3γθ² - 6γ²θ + 4γ² - γ + 1)/D³`.
pub fn exact_hessian(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let d = stable_denominator(theta, cfg)?;
    let g = cfg.gamma;
    let t = theta;
    let num = 2.0 * g * g * t * t * t + 3.0 * g * t * t - 6.0 * g * g * t + 4.0 * g * g - g + 1.0;
    Ok(num / (d * d * d) * noise_offset(cfg))
}

/// Model-free approximate Hessian `H(θ) = (1 + 2γθ)/D² · C`.
pub fn approx_hessian(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let d = stable_denominator(theta, cfg)?;
    Ok((1.0 + 2.0 * cfg.gamma * theta) / (d * d) * noise_offset(cfg))
}

/// Transition-gradient term `Λ(θ) = -4(γθ² + θ - γ)(1-θ)/D³ · C`.
pub fn lambda_term(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let d = stable_denominator(theta, cfg)?;
    Ok(-4.0 * stationarity_numerator(theta, cfg.gamma) * (1.0 - theta) / (d * d * d) * noise_offset(cfg))
}

/// `E_s[s²] = C/D`.
pub fn expected_s2(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let d = stable_denominator(theta, cfg)?;
    Ok(noise_offset(cfg) / d)
}

/// Fisher matrix `E_s[(∇_θπ)²] = E_s[s²]` for the linear policy.
pub fn fisher(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    expected_s2(theta, cfg)
}

pub fn curvature(theta: f64, cfg: &LqrConfig) -> Result<LqrCurvature> {
    Ok(LqrCurvature {
        theta,
        j: performance(theta, cfg)?,
        dj: gradient(theta, cfg)?,
        d2j_exact: exact_hessian(theta, cfg)?,
        h: approx_hessian(theta, cfg)?,
        lambda: lambda_term(theta, cfg)?,
        fisher: fisher(theta, cfg)?,
        expected_s2: expected_s2(theta, cfg)?,
    })
}

/// Optimal gain: the positive root of `γθ² + θ - γ`, by bisection on `[0, 1]`
/// down to adjacent floating-point numbers.
pub fn theta_star(cfg: &LqrConfig) -> f64 {
    let g = cfg.gamma;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stationarity_numerator(mid, g) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if stationarity_numerator(hi, g).abs() < stationarity_numerator(lo, g).abs() {
        hi
    } else {
        lo
    }
}

/// Integrand of the per-state transition-gradient term
/// `2 ∇_θV(s') ∇_θp(s'|s, π_θ(s))` for the Gaussian kernel `N(s - θs, σ²)`.
pub fn lambda_integrand(s: f64, s_next: f64, theta: f64, cfg: &LqrConfig) -> Result<f64> {
    let dp = value_coeff_derivative(theta, cfg)?;
    let dq = cfg.gamma * cfg.sigma_sq / (1.0 - cfg.gamma) * dp;
    let grad_v = dp * s_next * s_next + dq;
    let var = cfg.sigma_sq;
    let mean = s - theta * s;
    let dev = s_next - mean;
    let density = (-dev * dev / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    // ∂p/∂a · ∂a/∂θ with a = -θs
    let grad_p = density * dev / var * (-s);
    Ok(2.0 * grad_v * grad_p)
}

/// Per-state transition-gradient term `2∫∇_θV(s')∇_θp(s'|s, π_θ(s)) ds'` by
/// adaptive quadrature. For a noise-free kernel the integral reduces to
/// `-2s · d/dμ ∇_θV(μ)` at `μ = (1-θ)s`, taken by central differences.
pub fn lambda_state_term_numeric(s: f64, theta: f64, cfg: &LqrConfig) -> Result<f64> {
    stable_denominator(theta, cfg)?;
    let mean = s - theta * s;
    if cfg.sigma_sq > 0.0 {
        let sd = cfg.sigma_sq.sqrt();
        let half_width = 40.0 * sd;
        let mut err = None;
        let value = quadrature::adaptive_simpson(
            |x| match lambda_integrand(s, x, theta, cfg) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            mean - half_width,
            mean + half_width,
            QUADRATURE_REL_TOL * (1.0 + s * s),
        );
        match err {
            Some(e) => Err(e),
            None => Ok(value),
        }
    } else {
        let dp = value_coeff_derivative(theta, cfg)?;
        let grad_v = |x: f64| dp * x * x;
        let h = 1e-4 * (1.0 + mean.abs());
        Ok(-2.0 * s * (grad_v(mean + h) - grad_v(mean - h)) / (2.0 * h))
    }
}

/// `Λ(θ)` assembled numerically: the per-state term integrated against each
/// marginal `s_t ~ N(0, v_t)`, `v_{t+1} = (1-θ)² v_t + σ²`, weighted by `γᵗ`.
/// The inner kernel integral is adaptive; the outer Gaussian expectation uses
/// a 12-point Gauss-Hermite rule.
pub fn lambda_term_numeric(theta: f64, cfg: &LqrConfig) -> Result<f64> {
    stable_denominator(theta, cfg)?;
    let rule = quadrature::gauss_hermite_normal(12);
    let rho = (1.0 - theta) * (1.0 - theta);
    let mut var = cfg.sigma0_sq;
    let mut weight = 1.0;
    let mut total = 0.0;
    while weight > 1e-16 {
        if var > 0.0 {
            let sd = var.sqrt();
            let mut term = 0.0;
            for &(x, w) in &rule {
                term += w * lambda_state_term_numeric(sd * x, theta, cfg)?;
            }
            total += weight * term;
        }
        var = rho * var + cfg.sigma_sq;
        weight *= cfg.gamma;
    }
    Ok(total)
}
