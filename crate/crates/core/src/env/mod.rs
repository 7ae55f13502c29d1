//! Sampling-only MDP models.
//!
//! An environment exposes its transition as a deterministic function of the
//! state, the action and a vector of standard-normal draws. Rollout code owns
//! the random streams, which is what lets several perturbed trajectories share
//! the same noise (common random numbers).

mod cartpole;
mod lqr;

pub use cartpole::{
    cartpole_accels, cartpole_derivative, mechanical_energy, rk4_step, CartPoleConfig, CartPoleEnv,
};
pub use lqr::{lqr_cost, lqr_step, LqrConfig, LqrEnv};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub trait EnvModel: Send + Sync + std::fmt::Debug {
    fn n_state(&self) -> usize;
    fn n_action(&self) -> usize;
    fn discount(&self) -> f64;

    /// Number of standard-normal draws consumed by one transition.
    fn noise_dim(&self) -> usize;

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn stage_cost(&self, s: &[f64], a: &[f64]) -> f64;

    /// Writes the successor of `(s, a)` under noise draws `xi` into `next` and
    /// returns the stage cost `ℓ(s, a)`.
    fn step_with_noise(&self, s: &[f64], a: &[f64], xi: &[f64], next: &mut [f64]) -> Result<f64>;

    /// One stochastic transition, `(s', ℓ(s, a))`.
    fn step(&self, s: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Result<(Vec<f64>, f64)> {
        if s.len() != self.n_state() {
            return Err(Error::dims("env state", self.n_state(), s.len()));
        }
        if a.len() != self.n_action() {
            return Err(Error::dims("env action", self.n_action(), a.len()));
        }
        let xi: Vec<f64> = (0..self.noise_dim()).map(|_| StandardNormal.sample(rng)).collect();
        let mut next = vec![0.0; self.n_state()];
        let cost = self.step_with_noise(s, a, &xi, &mut next)?;
        Ok((next, cost))
    }
}
