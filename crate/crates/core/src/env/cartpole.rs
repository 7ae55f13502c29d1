use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EnvModel;
use crate::error::{Error, Result};

/// Cart-pendulum parameters. The state is ordered `(ẋ, x, φ̇, φ)` and the
/// angle `φ` is never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleConfig {
    /// Cart mass `M` in kg.
    pub cart_mass: f64,
    /// Pendulum mass `m` in kg.
    pub pole_mass: f64,
    /// Pendulum length `l` in m.
    pub pole_length: f64,
    pub gravity: f64,
    /// Sampling time of the RK4 discretization in s.
    pub dt: f64,
    pub gamma: f64,
    /// Per-coordinate variance of the additive Gaussian process noise.
    pub noise_var: f64,
    /// Weight on `aᵀa` in the stage cost `sᵀs + w·aᵀa`.
    pub action_cost: f64,
    /// Per-coordinate variance of the zero-mean Gaussian initial state.
    pub init_var: f64,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            cart_mass: 0.5,
            pole_mass: 0.2,
            pole_length: 0.3,
            gravity: 9.8,
            dt: 0.1,
            gamma: 0.95,
            noise_var: 1e-4,
            action_cost: 0.01,
            init_var: 0.01,
        }
    }
}

impl CartPoleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_length", self.pole_length),
            ("gravity", self.gravity),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        for (name, v) in [
            ("noise_var", self.noise_var),
            ("action_cost", self.action_cost),
            ("init_var", self.init_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Solves the cart-pendulum equations of motion for `(ẍ, φ̈)`:
///
/// ```text
/// (M+m)ẍ + ½ml φ̈ cosφ = ½ml φ̇² sinφ + u
/// ½ml ẍ cosφ + ⅓ml² φ̈ = -½mgl sinφ
/// ```
pub fn cartpole_accels(state: &[f64; 4], u: f64, cfg: &CartPoleConfig) -> Result<(f64, f64)> {
    if state.iter().any(|x| !x.is_finite()) || !u.is_finite() {
        return Err(Error::NonFinite("cart-pendulum state or force"));
    }
    let [_, _, phi_dot, phi] = *state;
    let (m, l) = (cfg.pole_mass, cfg.pole_length);
    let (sin, cos) = phi.sin_cos();
    let a11 = cfg.cart_mass + m;
    let a12 = 0.5 * m * l * cos;
    let a22 = m * l * l / 3.0;
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-14) {
        return Err(Error::Singular(format!("cart-pendulum mass matrix, det = {det:e}")));
    }
    let b1 = 0.5 * m * l * phi_dot * phi_dot * sin + u;
    let b2 = -0.5 * m * cfg.gravity * l * sin;
    let x_acc = (a22 * b1 - a12 * b2) / det;
    let phi_acc = (a11 * b2 - a12 * b1) / det;
    Ok((x_acc, phi_acc))
}

/// Continuous-time state derivative `d/dt (ẋ, x, φ̇, φ)`.
pub fn cartpole_derivative(state: &[f64; 4], u: f64, cfg: &CartPoleConfig) -> Result<[f64; 4]> {
    let (x_acc, phi_acc) = cartpole_accels(state, u, cfg)?;
    Ok([x_acc, state[0], phi_acc, state[2]])
}

/// Total mechanical energy with the potential referenced to the pivot height.
pub fn mechanical_energy(state: &[f64; 4], cfg: &CartPoleConfig) -> f64 {
    let [x_dot, _, phi_dot, phi] = *state;
    let (m, l) = (cfg.pole_mass, cfg.pole_length);
    0.5 * (cfg.cart_mass + m) * x_dot * x_dot
        + 0.5 * m * l * x_dot * phi_dot * phi.cos()
        + m * l * l / 6.0 * phi_dot * phi_dot
        - 0.5 * m * cfg.gravity * l * phi.cos()
}

/// One classical RK4 step of `ṡ = f(s, a)` with `a` held constant over `dt`.
pub fn rk4_step<const N: usize, F>(deriv: F, s: &[f64; N], a: &[f64], dt: f64) -> Result<[f64; N]>
where
    F: Fn(&[f64; N], &[f64]) -> Result<[f64; N]>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("rk4 step must be positive, got {dt}")));
    }
    let axpy = |c: f64, k: &[f64; N]| -> [f64; N] { std::array::from_fn(|i| s[i] + c * k[i]) };
    let k1 = deriv(s, a)?;
    let k2 = deriv(&axpy(0.5 * dt, &k1), a)?;
    let k3 = deriv(&axpy(0.5 * dt, &k2), a)?;
    let k4 = deriv(&axpy(dt, &k3), a)?;
    let out: [f64; N] =
        std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rk4_step"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleEnv {
    pub config: CartPoleConfig,
}

impl CartPoleEnv {
    pub fn new(config: CartPoleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Noise-free discrete dynamics `f(s, a)`.
    pub fn transition(&self, s: &[f64; 4], u: f64) -> Result<[f64; 4]> {
        let cfg = &self.config;
        rk4_step(|x, a| cartpole_derivative(x, a[0], cfg), s, &[u], cfg.dt)
    }
}

impl EnvModel for CartPoleEnv {
    fn n_state(&self) -> usize {
        4
    }

    fn n_action(&self) -> usize {
        1
    }

    fn discount(&self) -> f64 {
        self.config.gamma
    }

    fn noise_dim(&self) -> usize {
        4
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let sd = self.config.init_var.sqrt();
        (0..4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    }

    fn stage_cost(&self, s: &[f64], a: &[f64]) -> f64 {
        s.iter().map(|x| x * x).sum::<f64>() + self.config.action_cost * a.iter().map(|u| u * u).sum::<f64>()
    }

    fn step_with_noise(&self, s: &[f64], a: &[f64], xi: &[f64], next: &mut [f64]) -> Result<f64> {
        let state: [f64; 4] = [s[0], s[1], s[2], s[3]];
        let f = self.transition(&state, a[0])?;
        let sd = self.config.noise_var.sqrt();
        for i in 0..4 {
            next[i] = f[i] + sd * xi[i];
        }
        Ok(self.stage_cost(s, a))
    }
}
