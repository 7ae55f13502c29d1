use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EnvModel;
use crate::error::{Error, Result};

/// Scalar LQR `s⁺ = s + a + w`, `w ~ N(0, σ²)`, `s₀ ~ N(0, σ₀²)`,
/// stage cost `0.5(s² + a²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrConfig {
    pub sigma0_sq: f64,
    pub sigma_sq: f64,
    pub gamma: f64,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            sigma0_sq: 0.1,
            sigma_sq: 0.1,
            gamma: 0.9,
        }
    }
}

impl LqrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0_sq >= 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma0_sq must be >= 0, got {}", self.sigma0_sq)));
        }
        if !(self.sigma_sq >= 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma_sq must be >= 0, got {}", self.sigma_sq)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

#[inline]
pub fn lqr_step(s: f64, a: f64, w: f64) -> f64 {
    s + a + w
}

#[inline]
pub fn lqr_cost(s: f64, a: f64) -> f64 {
    0.5 * (s * s + a * a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrEnv {
    pub config: LqrConfig,
}

impl LqrEnv {
    pub fn new(config: LqrConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl EnvModel for LqrEnv {
    fn n_state(&self) -> usize {
        1
    }

    fn n_action(&self) -> usize {
        1
    }

    fn discount(&self) -> f64 {
        self.config.gamma
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        vec![self.config.sigma0_sq.sqrt() * z]
    }

    fn stage_cost(&self, s: &[f64], a: &[f64]) -> f64 {
        lqr_cost(s[0], a[0])
    }

    #[inline]
    fn step_with_noise(&self, s: &[f64], a: &[f64], xi: &[f64], next: &mut [f64]) -> Result<f64> {
        next[0] = lqr_step(s[0], a[0], self.config.sigma_sq.sqrt() * xi[0]);
        Ok(lqr_cost(s[0], a[0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn step_examples() {
        assert!((lqr_step(0.5, -0.3, 0.1) - 0.3).abs() < 1e-15);
        for s in [-3.0, 0.0, 1.25, 7.5] {
            assert_eq!(lqr_step(s, -s, 0.0), 0.0);
        }
        assert_eq!(lqr_cost(1.0, -1.0), 1.0);
    }

    #[test]
    fn next_state_mean_matches() {
        let env = LqrEnv::new(LqrConfig::default()).unwrap();
        let mut rng = stream(11, &[]);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += env.step(&[1.0], &[-0.5], &mut rng).unwrap().0[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * (0.1f64 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn step_is_reproducible() {
        let env = LqrEnv::new(LqrConfig::default()).unwrap();
        let a = env.step(&[0.3], &[0.1], &mut stream(5, &[1])).unwrap();
        let b = env.step(&[0.3], &[0.1], &mut stream(5, &[1])).unwrap();
        assert_eq!(a.0[0].to_bits(), b.0[0].to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn config_validation() {
        assert!(LqrConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(LqrConfig { sigma_sq: -0.1, ..Default::default() }.validate().is_err());
        assert!(LqrConfig { sigma_sq: 0.0, ..Default::default() }.validate().is_ok());
    }
}
