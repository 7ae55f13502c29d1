//! Model-free Monte-Carlo estimates of the policy gradient, the approximate
//! Hessian `H(θ)` and the Fisher matrix `F(θ)`.
//!
//! The outer expectation over the discounted state distribution is sampled by
//! simulating `n_outer` trajectories of length `T` and weighting each visited
//! state by `γᵗ` (no normalization). At every visited state the action
//! derivatives of `Q` are taken by central finite differences of truncated
//! Monte-Carlo `Q` rollouts; all perturbed rollouts of one state share their
//! noise (common random numbers).
//!
//! Work items are seeded from `(plan.seed, item index)` and reduced in index
//! order, so estimates are bit-identical for any rayon thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::linalg::{tensor_vec_product, SymMatrix};
use crate::policy::Policy;
use crate::rng::{stream, StreamRng};
use crate::tolerances::DEFAULT_FD_STEP;

const STREAM_VISIT: u64 = 0;
const STREAM_Q_SHARED: u64 = 1;
const STREAM_Q_INDEPENDENT: u64 = 2;
const STREAM_PERFORMANCE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutPlan {
    /// Number of sampled visitation trajectories.
    pub n_outer: usize,
    /// Truncation length `T` of both visitation trajectories and `Q` rollouts.
    pub horizon: usize,
    /// Rollouts averaged per `Q` evaluation.
    pub n_q: usize,
    /// Action finite-difference step `δ_a`.
    pub fd_step: f64,
    pub seed: u64,
    /// Share noise across the perturbed `Q` rollouts of one state.
    #[serde(default = "default_true")]
    pub common_random_numbers: bool,
}

fn default_true() -> bool {
    true
}

impl Default for RolloutPlan {
    fn default() -> Self {
        Self {
            n_outer: 2000,
            horizon: 80,
            n_q: 50,
            fd_step: DEFAULT_FD_STEP,
            seed: 0,
            common_random_numbers: true,
        }
    }
}

impl RolloutPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_outer < 1 || self.horizon < 1 || self.n_q < 1 {
            return Err(Error::InvalidConfig(format!(
                "rollout plan needs n_outer, horizon, n_q >= 1 (got {}, {}, {})",
                self.n_outer, self.horizon, self.n_q
            )));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::InvalidConfig(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedState {
    pub state: Vec<f64>,
    /// Discount weight `γᵗ`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    pub states: Vec<WeightedState>,
    /// Set when the trajectory was cut short by a non-finite state.
    pub truncated: bool,
}

/// Simulates one trajectory `s₀, …, s_{T-1}` under `π_θ` and returns every
/// visited state with weight `γᵗ`.
pub fn sample_discounted_states<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    plan: &RolloutPlan,
    rng: &mut dyn RngCore,
) -> Result<Visitation>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    plan.validate()?;
    check_shapes(env, policy, theta)?;
    let gamma = env.discount();
    let mut s = env.sample_initial(rng);
    let mut a = vec![0.0; env.n_action()];
    let mut xi = vec![0.0; env.noise_dim()];
    let mut next = vec![0.0; env.n_state()];
    let mut states = Vec::with_capacity(plan.horizon);
    let mut weight = 1.0;
    let mut truncated = false;
    for t in 0..plan.horizon {
        if s.iter().any(|x| !x.is_finite()) {
            log::warn!("visitation trajectory truncated at t = {t}: non-finite state");
            truncated = true;
            break;
        }
        states.push(WeightedState {
            state: s.clone(),
            weight,
        });
        if t + 1 == plan.horizon {
            break;
        }
        policy.action_into(theta, &s, &mut a);
        fill_normal(rng, &mut xi);
        if env.step_with_noise(&s, &a, &xi, &mut next).is_err() {
            log::warn!("visitation trajectory truncated at t = {}: transition failed", t + 1);
            truncated = true;
            break;
        }
        std::mem::swap(&mut s, &mut next);
        weight *= gamma;
    }
    Ok(Visitation { states, truncated })
}

fn fill_normal(rng: &mut (impl RngCore + ?Sized), out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

fn check_shapes<E, P>(env: &E, policy: &P, theta: &[f64]) -> Result<()>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    if policy.n_state() != env.n_state() {
        return Err(Error::dims("policy vs env state", env.n_state(), policy.n_state()));
    }
    if policy.n_action() != env.n_action() {
        return Err(Error::dims("policy vs env action", env.n_action(), policy.n_action()));
    }
    if theta.len() != policy.n_params() {
        return Err(Error::dims("policy parameters", policy.n_params(), theta.len()));
    }
    Ok(())
}

/// Buffers for [`shared_noise_rollouts`], reused across rollouts.
struct Scratch {
    states: Vec<f64>,
    next: Vec<f64>,
    action: Vec<f64>,
    xi: Vec<f64>,
}

impl Scratch {
    fn new<E: EnvModel + ?Sized>(env: &E, n_probes: usize) -> Self {
        Self {
            states: vec![0.0; n_probes * env.n_state()],
            next: vec![0.0; n_probes * env.n_state()],
            action: vec![0.0; env.n_action()],
            xi: vec![0.0; env.noise_dim()],
        }
    }
}

/// Runs one truncated `Q` rollout per probe action from state `s`, all probes
/// driven by the same noise sequence drawn from `rng`. Each returned value is
/// `ℓ(s, a) + Σ_{t=1}^{T} γᵗ ℓ(s_t, π_θ(s_t))`.
#[allow(clippy::too_many_arguments)]
fn shared_noise_rollouts<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    s: &[f64],
    probes: &[Vec<f64>],
    horizon: usize,
    rng: &mut StreamRng,
    scratch: &mut Scratch,
    out: &mut [f64],
) -> Result<()>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    let n_s = env.n_state();
    let k = probes.len();
    let gamma = env.discount();
    let Scratch {
        states,
        next,
        action,
        xi,
    } = scratch;
    let (mut states, mut next) = (&mut states[..k * n_s], &mut next[..k * n_s]);
    fill_normal(rng, xi);
    for ((probe, q), nx) in probes.iter().zip(out.iter_mut()).zip(next.chunks_exact_mut(n_s)) {
        *q = env.step_with_noise(s, probe, xi, nx)?;
    }
    std::mem::swap(&mut states, &mut next);
    let mut weight = gamma;
    for _ in 1..horizon {
        fill_normal(rng, xi);
        for ((sp, nx), q) in states.chunks_exact(n_s).zip(next.chunks_exact_mut(n_s)).zip(out.iter_mut()) {
            policy.action_into(theta, sp, action);
            *q += weight * env.step_with_noise(sp, action, xi, nx)?;
        }
        std::mem::swap(&mut states, &mut next);
        weight *= gamma;
    }
    for (sp, q) in states.chunks_exact(n_s).zip(out.iter_mut()) {
        policy.action_into(theta, sp, action);
        *q += weight * env.stage_cost(sp, action);
    }
    if out[..k].iter().any(|q| !q.is_finite()) {
        return Err(Error::NonFinite("estimate_q"));
    }
    Ok(())
}

/// Monte-Carlo estimate of `Q^{π_θ}(s, a)` averaged over `plan.n_q` rollouts.
pub fn estimate_q<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    s: &[f64],
    a: &[f64],
    plan: &RolloutPlan,
    rng: &mut dyn RngCore,
) -> Result<f64>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    plan.validate()?;
    check_shapes(env, policy, theta)?;
    if s.len() != env.n_state() || a.len() != env.n_action() {
        return Err(Error::dims("estimate_q state/action", env.n_state() + env.n_action(), s.len() + a.len()));
    }
    let probes = [a.to_vec()];
    let mut scratch = Scratch::new(env, 1);
    let mut value = [0.0];
    let mut sum = 0.0;
    for _ in 0..plan.n_q {
        let mut sub = StreamRng::seed_from_u64(rng.next_u64());
        shared_noise_rollouts(env, policy, theta, s, &probes, plan.horizon, &mut sub, &mut scratch, &mut value)?;
        sum += value[0];
    }
    Ok(sum / plan.n_q as f64)
}

/// Finite-difference stencil around `a0`: the center, `±δe_i` for every
/// action coordinate, then `(±δe_i, ±δe_j)` in the order `++, +-, -+, --`
/// for every pair `i < j`.
pub fn action_stencil(a0: &[f64], delta: f64) -> Vec<Vec<f64>> {
    let n = a0.len();
    let mut pts = vec![a0.to_vec()];
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut p = a0.to_vec();
            p[i] += sign * delta;
            pts.push(p);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut p = a0.to_vec();
                p[i] += si * delta;
                p[j] += sj * delta;
                pts.push(p);
            }
        }
    }
    pts
}

/// Central-difference gradient and Hessian from values on [`action_stencil`].
pub fn stencil_derivatives(values: &[f64], n_a: usize, delta: f64) -> Result<(Vec<f64>, SymMatrix)> {
    let expected = 1 + 2 * n_a + 2 * n_a * n_a.saturating_sub(1);
    if values.len() != expected {
        return Err(Error::dims("stencil values", expected, values.len()));
    }
    let center = values[0];
    let plus = |i: usize| values[1 + 2 * i];
    let minus = |i: usize| values[2 + 2 * i];
    let grad = (0..n_a).map(|i| (plus(i) - minus(i)) / (2.0 * delta)).collect();
    let mut hess = DMatrix::zeros(n_a, n_a);
    for i in 0..n_a {
        hess[(i, i)] = (plus(i) + minus(i) - 2.0 * center) / (delta * delta);
    }
    let mut idx = 1 + 2 * n_a;
    for i in 0..n_a {
        for j in i + 1..n_a {
            let (pp, pm, mp, mm) = (values[idx], values[idx + 1], values[idx + 2], values[idx + 3]);
            let v = (pp - pm - mp + mm) / (4.0 * delta * delta);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            idx += 4;
        }
    }
    Ok((grad, SymMatrix::new(hess)?))
}

/// `∇_aQ` and `∇²_aQ` at `a = π_θ(s)` from one stencil of rollouts.
#[allow(clippy::too_many_arguments)]
fn stencil_at_state<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    s: &[f64],
    plan: &RolloutPlan,
    seed: u64,
    path: &[u64],
) -> Result<(Vec<f64>, SymMatrix)>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    let a0 = policy.action(theta, s)?;
    let probes = action_stencil(&a0, plan.fd_step);
    let k = probes.len();
    let mut sums = vec![0.0; k];
    let mut vals = vec![0.0; k];
    let mut scratch = Scratch::new(env, k);
    let mut key = path.to_vec();
    // under common random numbers the rollouts of one state draw their noise
    // consecutively from a single stream
    key.push(STREAM_Q_SHARED);
    let mut shared = stream(seed, &key);
    for r in 0..plan.n_q {
        if plan.common_random_numbers {
            shared_noise_rollouts(env, policy, theta, s, &probes, plan.horizon, &mut shared, &mut scratch, &mut vals)?;
        } else {
            for (p, probe) in probes.iter().enumerate() {
                key.truncate(path.len());
                key.extend([STREAM_Q_INDEPENDENT, r as u64, p as u64]);
                let mut rng = stream(seed, &key);
                shared_noise_rollouts(
                    env,
                    policy,
                    theta,
                    s,
                    std::slice::from_ref(probe),
                    plan.horizon,
                    &mut rng,
                    &mut scratch,
                    &mut vals[p..p + 1],
                )?;
            }
        }
        for (acc, v) in sums.iter_mut().zip(&vals) {
            *acc += v;
        }
    }
    for v in &mut sums {
        *v /= plan.n_q as f64;
    }
    stencil_derivatives(&sums, env.n_action(), plan.fd_step)
}

/// `∇_aQ(s, a)` at `a = π_θ(s)`.
pub fn grad_a_q<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    s: &[f64],
    plan: &RolloutPlan,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    plan.validate()?;
    check_shapes(env, policy, theta)?;
    let seed = rng.random::<u64>();
    Ok(stencil_at_state(env, policy, theta, s, plan, seed, &[])?.0)
}

/// `∇²_aQ(s, a)` at `a = π_θ(s)`.
pub fn hess_a_q<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    s: &[f64],
    plan: &RolloutPlan,
    rng: &mut dyn RngCore,
) -> Result<SymMatrix>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    plan.validate()?;
    check_shapes(env, policy, theta)?;
    let seed = rng.random::<u64>();
    Ok(stencil_at_state(env, policy, theta, s, plan, seed, &[])?.1)
}

/// Sample mean with per-entry standard errors over trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEstimate {
    pub mean: SymMatrix,
    pub se: DMatrix<f64>,
    pub n_samples: usize,
}

/// Gradient, approximate Hessian and Fisher estimates from one sampling pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradHessEstimate {
    pub grad: VectorEstimate,
    pub h: MatrixEstimate,
    pub fisher: MatrixEstimate,
    pub n_samples: usize,
    /// Visitation trajectories cut short by non-finite states.
    pub n_truncated: usize,
    /// `γ^T`: the discount mass dropped by truncating at `T`, per unit cost.
    pub truncation_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Parts {
    q: bool,
    hessian: bool,
}

struct TrajectoryContribution {
    grad: DVector<f64>,
    h: DMatrix<f64>,
    fisher: DMatrix<f64>,
    truncated: bool,
}

fn trajectory_contribution<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    plan: &RolloutPlan,
    index: usize,
    parts: Parts,
) -> Result<TrajectoryContribution>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    let n = policy.n_params();
    let mut rng = stream(plan.seed, &[STREAM_VISIT, index as u64]);
    let visit = sample_discounted_states(env, policy, theta, plan, &mut rng)?;
    let mut grad = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    let mut fisher = DMatrix::zeros(n, n);
    let linear = policy.is_linear_in_params();
    for (t, ws) in visit.states.iter().enumerate() {
        let jac = policy.jacobian(theta, &ws.state)?;
        fisher += &jac * jac.transpose() * ws.weight;
        if !parts.q {
            continue;
        }
        let (g, hq) = stencil_at_state(env, policy, theta, &ws.state, plan, plan.seed, &[index as u64, t as u64])?;
        let gv = DVector::from_column_slice(&g);
        grad += &jac * &gv * ws.weight;
        if parts.hessian {
            let mut term = &jac * hq.as_matrix() * jac.transpose();
            if !linear {
                term += tensor_vec_product(&policy.param_hessian(theta, &ws.state)?, &g)?;
            }
            h += term * ws.weight;
        }
    }
    Ok(TrajectoryContribution {
        grad,
        h,
        fisher,
        truncated: visit.truncated,
    })
}

fn mean_and_se<'a>(items: impl Iterator<Item = &'a [f64]>, len: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mut sum = vec![0.0; len];
    let mut sum_sq = vec![0.0; len];
    let mut n = 0usize;
    for x in items {
        for i in 0..len {
            sum[i] += x[i];
            sum_sq[i] += x[i] * x[i];
        }
        n += 1;
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se = if n > 1 {
        mean.iter()
            .zip(&sum_sq)
            .map(|(m, ss)| (((ss - nf * m * m) / (nf - 1.0)).max(0.0) / nf).sqrt())
            .collect()
    } else {
        vec![f64::NAN; len]
    };
    (mean, se, n)
}

fn matrix_estimate(mats: &[&DMatrix<f64>], n: usize) -> Result<MatrixEstimate> {
    let (mean, se, count) = mean_and_se(mats.iter().map(|m| m.as_slice()), n * n);
    Ok(MatrixEstimate {
        mean: SymMatrix::new(DMatrix::from_column_slice(n, n, &mean))?,
        se: DMatrix::from_column_slice(n, n, &se),
        n_samples: count,
    })
}

fn estimate_parts<E, P>(env: &E, policy: &P, theta: &[f64], plan: &RolloutPlan, parts: Parts) -> Result<GradHessEstimate>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    plan.validate()?;
    check_shapes(env, policy, theta)?;
    let contributions: Vec<TrajectoryContribution> = (0..plan.n_outer)
        .into_par_iter()
        .map(|i| trajectory_contribution(env, policy, theta, plan, i, parts))
        .collect::<Result<_>>()?;
    let n = policy.n_params();
    let (gm, gse, count) = mean_and_se(contributions.iter().map(|c| c.grad.as_slice()), n);
    let h = matrix_estimate(&contributions.iter().map(|c| &c.h).collect::<Vec<_>>(), n)?;
    let fisher = matrix_estimate(&contributions.iter().map(|c| &c.fisher).collect::<Vec<_>>(), n)?;
    Ok(GradHessEstimate {
        grad: VectorEstimate {
            mean: gm,
            se: gse,
            n_samples: count,
        },
        h,
        fisher,
        n_samples: count,
        n_truncated: contributions.iter().filter(|c| c.truncated).count(),
        truncation_weight: env.discount().powi(plan.horizon as i32),
    })
}

/// Gradient, `H` and `F` from one pass.
pub fn estimate_all<E, P>(env: &E, policy: &P, theta: &[f64], plan: &RolloutPlan) -> Result<GradHessEstimate>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    estimate_parts(env, policy, theta, plan, Parts { q: true, hessian: true })
}

/// `∇J ≈ E_s[∇_θπ(s) ∇_aQ(s, π_θ(s))]`.
pub fn estimate_gradient<E, P>(env: &E, policy: &P, theta: &[f64], plan: &RolloutPlan) -> Result<VectorEstimate>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    Ok(estimate_parts(env, policy, theta, plan, Parts { q: true, hessian: false })?.grad)
}

/// `H ≈ E_s[∇²_θπ ⊗ ∇_aQ + ∇_θπ ∇²_aQ ∇_θπᵀ]`.
pub fn estimate_h<E, P>(env: &E, policy: &P, theta: &[f64], plan: &RolloutPlan) -> Result<MatrixEstimate>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    Ok(estimate_all(env, policy, theta, plan)?.h)
}

/// `F ≈ E_s[∇_θπ ∇_θπᵀ]`; needs no `Q` rollouts.
pub fn estimate_fisher<E, P>(env: &E, policy: &P, theta: &[f64], plan: &RolloutPlan) -> Result<MatrixEstimate>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    Ok(estimate_parts(env, policy, theta, plan, Parts { q: false, hessian: false })?.fisher)
}

/// Monte-Carlo `J(θ) = E[Σ_{t=0}^{T} γᵗ ℓ(s_t, π_θ(s_t))]` from `n_rollouts`
/// independent rollouts; returns `(mean, standard error)`.
pub fn estimate_performance<E, P>(
    env: &E,
    policy: &P,
    theta: &[f64],
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    check_shapes(env, policy, theta)?;
    if n_rollouts == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("performance estimate needs n_rollouts, horizon >= 1".into()));
    }
    let returns: Vec<f64> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = stream(seed, &[STREAM_PERFORMANCE, i as u64]);
            let s0 = env.sample_initial(&mut rng);
            let a0 = policy.action(theta, &s0)?;
            let mut out = [0.0];
            let mut scratch = Scratch::new(env, 1);
            shared_noise_rollouts(env, policy, theta, &s0, &[a0], horizon, &mut rng, &mut scratch, &mut out)?;
            Ok(out[0])
        })
        .collect::<Result<_>>()?;
    let (mean, se, _) = mean_and_se(returns.iter().map(std::slice::from_ref), 1);
    Ok((mean[0], se[0]))
}
