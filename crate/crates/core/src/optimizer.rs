//! Parameter update rules, the learning loop and convergence diagnostics.
//!
//! Four rules share one loop:
//!
//! - `gd`: `θ - α∇J`
//! - `ngd`: `θ - αF⁻¹∇J` (Fisher floored at `λ_floor`)
//! - `qn`: `θ - αH⁻¹∇J`
//! - `qn_reg`: `θ - α(H + βF)⁻¹∇J` with the smallest `β` that lifts the
//!   minimum eigenvalue to `λ_floor`

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, LqrConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all, estimate_performance, RolloutPlan};
use crate::linalg::{min_eigenvalue, solve_spd, SymMatrix};
use crate::lqr;
use crate::policy::{ParamVector, Policy};
use crate::rng::derive_seed;
use crate::tolerances::{BETA_BISECTION_TOL, DIAGNOSTIC_ERROR_FLOOR, ORACLE_GRAD_STOP, SUPERLINEAR_RATIO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Ngd,
    Qn,
    QnReg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gd, Method::Ngd, Method::Qn, Method::QnReg];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Ngd => "ngd",
            Method::Qn => "qn",
            Method::QnReg => "qn_reg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSource {
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Step size `α`.
    pub alpha: f64,
    /// Fixed Fisher weight added before eigenvalue-floor regularization (`qn_reg`).
    pub beta: f64,
    pub lambda_floor: f64,
    pub max_iters: usize,
    pub theta0: ParamVector,
    pub curvature: CurvatureSource,
}

impl OptimizerConfig {
    pub fn new(method: Method, alpha: f64, theta0: ParamVector) -> Self {
        Self {
            method,
            alpha,
            beta: 0.0,
            lambda_floor: 1e-3,
            max_iters: 20,
            theta0,
            curvature: CurvatureSource::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lambda_floor > 0.0 && self.lambda_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda_floor must be positive, got {}",
                self.lambda_floor
            )));
        }
        Ok(())
    }
}

fn check_len(theta: &[f64], grad: &[f64]) -> Result<()> {
    if theta.len() != grad.len() {
        return Err(Error::dims("update (theta vs grad)", theta.len(), grad.len()));
    }
    Ok(())
}

fn axpy(theta: &[f64], alpha: f64, dir: &[f64]) -> Result<ParamVector> {
    let out: Vec<f64> = theta.iter().zip(dir).map(|(t, d)| t - alpha * d).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("parameter update"));
    }
    ParamVector::new(out)
}

/// `θ - α∇J`.
pub fn gd_step(theta: &[f64], grad: &[f64], alpha: f64) -> Result<ParamVector> {
    check_len(theta, grad)?;
    axpy(theta, alpha, grad)
}

/// `θ - αH⁻¹∇J`; fails with [`Error::NotPositiveDefinite`] when `H` is not SPD.
pub fn qn_step(theta: &[f64], grad: &[f64], h: &SymMatrix, alpha: f64) -> Result<ParamVector> {
    check_len(theta, grad)?;
    let dir = solve_spd(h, grad)?;
    axpy(theta, alpha, dir.as_slice())
}

/// `θ - αF⁻¹∇J`, with `F + λ_floor·I` used when `min eig(F) < λ_floor`.
pub fn ngd_step(theta: &[f64], grad: &[f64], fisher: &SymMatrix, alpha: f64, lambda_floor: f64) -> Result<ParamVector> {
    check_len(theta, grad)?;
    let f = floor_fisher(fisher, lambda_floor);
    let dir = solve_spd(&f, grad).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot } => Error::Singular(format!("Fisher after flooring, pivot {pivot:e}")),
        other => other,
    })?;
    axpy(theta, alpha, dir.as_slice())
}

pub fn floor_fisher(fisher: &SymMatrix, lambda_floor: f64) -> SymMatrix {
    if min_eigenvalue(fisher) < lambda_floor {
        fisher.shifted(lambda_floor)
    } else {
        fisher.clone()
    }
}

/// Smallest `β ≥ 0` (to [`BETA_BISECTION_TOL`]) with
/// `min eig(H + βF) ≥ λ_floor`. Falls back to `H + βI` when `F` is not
/// positive definite. Returns `(H + βF, β)`.
pub fn regularize(h: &SymMatrix, fisher: &SymMatrix, lambda_floor: f64) -> Result<(SymMatrix, f64)> {
    if h.n() != fisher.n() {
        return Err(Error::dims("regularize (H vs F)", h.n(), fisher.n()));
    }
    if min_eigenvalue(h) >= lambda_floor {
        return Ok((h.clone(), 0.0));
    }
    let pd_fisher = min_eigenvalue(fisher) > 0.0;
    let base = if pd_fisher {
        fisher.clone()
    } else {
        SymMatrix::identity(h.n())
    };
    let feasible = |beta: f64| -> Result<bool> { Ok(min_eigenvalue(&h.add_scaled(beta, &base)?) >= lambda_floor) };
    let mut hi = 1.0_f64;
    while !feasible(hi)? {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonFinite("regularize bracket"));
        }
    }
    let mut lo = 0.0_f64;
    while hi - lo > BETA_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((h.add_scaled(hi, &base)?, hi))
}

/// Objective value, gradient and curvature information at one `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSample {
    pub j: f64,
    pub grad: Vec<f64>,
    pub h: SymMatrix,
    pub fisher: SymMatrix,
}

/// Supplies `J`, `∇J`, `H` and `F` to the learning loop.
pub trait CurvatureModel {
    fn evaluate(&mut self, theta: &ParamVector, iteration: usize) -> Result<CurvatureSample>;

    /// The known optimum, when available.
    fn optimum(&self) -> Option<ParamVector> {
        None
    }

    /// Exact models stop on a small gradient norm; noisy ones never do.
    fn is_exact(&self) -> bool {
        false
    }
}

/// Closed-form scalar LQR curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrOracleModel {
    pub config: LqrConfig,
}

impl CurvatureModel for LqrOracleModel {
    fn evaluate(&mut self, theta: &ParamVector, _iteration: usize) -> Result<CurvatureSample> {
        if theta.len() != 1 {
            return Err(Error::dims("LQR oracle parameters", 1, theta.len()));
        }
        let c = lqr::curvature(theta[0], &self.config)?;
        Ok(CurvatureSample {
            j: c.j,
            grad: vec![c.dj],
            h: SymMatrix::scalar(c.h),
            fisher: SymMatrix::scalar(c.fisher),
        })
    }

    fn optimum(&self) -> Option<ParamVector> {
        ParamVector::new(vec![lqr::theta_star(&self.config)]).ok()
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Rollout-based curvature. Iteration `k` samples with seed
/// `derive(plan.seed, k)`; `J` uses a fixed evaluation seed so successive
/// iterates are compared on common noise.
#[derive(Debug)]
pub struct EstimatedModel<'a, E: ?Sized, P: ?Sized> {
    pub env: &'a E,
    pub policy: &'a P,
    pub plan: RolloutPlan,
    pub eval_rollouts: usize,
    pub eval_horizon: usize,
    pub eval_seed: u64,
    pub optimum: Option<ParamVector>,
}

impl<'a, E, P> EstimatedModel<'a, E, P>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    pub fn new(env: &'a E, policy: &'a P, plan: RolloutPlan) -> Self {
        Self {
            env,
            policy,
            plan,
            eval_rollouts: plan.n_outer,
            eval_horizon: plan.horizon,
            eval_seed: derive_seed(plan.seed, &[u64::MAX]),
            optimum: None,
        }
    }
}

impl<E, P> CurvatureModel for EstimatedModel<'_, E, P>
where
    E: EnvModel + ?Sized,
    P: Policy + ?Sized,
{
    fn evaluate(&mut self, theta: &ParamVector, iteration: usize) -> Result<CurvatureSample> {
        let (j, _) = estimate_performance(
            self.env,
            self.policy,
            theta,
            self.eval_rollouts,
            self.eval_horizon,
            self.eval_seed,
        )?;
        let plan = self.plan.with_seed(derive_seed(self.plan.seed, &[iteration as u64]));
        let est = estimate_all(self.env, self.policy, theta, &plan)?;
        if !j.is_finite() || est.grad.mean.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("estimated curvature"));
        }
        Ok(CurvatureSample {
            j,
            grad: est.grad.mean,
            h: est.h.mean,
            fisher: est.fisher.mean,
        })
    }

    fn optimum(&self) -> Option<ParamVector> {
        self.optimum.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub theta: Vec<f64>,
    pub j: f64,
    pub grad_norm: f64,
    /// Curvature matrix the update at this iterate used (`None` for `gd` and
    /// for the final iterate).
    pub curvature: Option<SymMatrix>,
    pub beta_used: Option<f64>,
    /// `‖θ_k - θ*‖`, against the exact or proxy reference of the trace.
    pub err_to_opt: Option<f64>,
    /// `e_k / e_{k-1}`: the contraction achieved by the step into this iterate.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    Exact,
    /// Lowest-`J` iterate of the trace, used when `θ*` is unknown.
    BestIterateProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub method: Method,
    pub alpha: f64,
    pub records: Vec<IterationRecord>,
    pub diverged: bool,
    pub failure: Option<String>,
    pub error_reference: ErrorReference,
}

impl LearningTrace {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.err_to_opt).collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs `cfg.max_iters` updates (fewer if an exact model reaches a gradient
/// norm below [`ORACLE_GRAD_STOP`], or the iteration diverges).
pub fn run_learning(model: &mut dyn CurvatureModel, cfg: &OptimizerConfig) -> Result<LearningTrace> {
    cfg.validate()?;
    let mut theta = cfg.theta0.clone();
    let mut records = Vec::with_capacity(cfg.max_iters + 1);
    let mut diverged = false;
    let mut failure = None;
    for k in 0..=cfg.max_iters {
        let sample = match model.evaluate(&theta, k) {
            Ok(s) => s,
            Err(e @ (Error::UnstableParameter { .. } | Error::NonFinite(_))) => {
                records.push(IterationRecord {
                    iter: k,
                    theta: theta.to_vec(),
                    j: f64::NAN,
                    grad_norm: f64::NAN,
                    curvature: None,
                    beta_used: None,
                    err_to_opt: None,
                    ratio: None,
                });
                diverged = true;
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let grad_norm = norm(&sample.grad);
        let mut record = IterationRecord {
            iter: k,
            theta: theta.to_vec(),
            j: sample.j,
            grad_norm,
            curvature: None,
            beta_used: None,
            err_to_opt: None,
            ratio: None,
        };
        if k == cfg.max_iters || (model.is_exact() && grad_norm < ORACLE_GRAD_STOP) {
            records.push(record);
            break;
        }
        let step = match cfg.method {
            Method::Gd => gd_step(&theta, &sample.grad, cfg.alpha),
            Method::Ngd => {
                let f = floor_fisher(&sample.fisher, cfg.lambda_floor);
                record.curvature = Some(f.clone());
                ngd_step(&theta, &sample.grad, &f, cfg.alpha, cfg.lambda_floor)
            }
            Method::Qn => {
                record.curvature = Some(sample.h.clone());
                qn_step(&theta, &sample.grad, &sample.h, cfg.alpha)
            }
            Method::QnReg => {
                let base = sample.h.add_scaled(cfg.beta, &sample.fisher)?;
                let (curv, beta) = regularize(&base, &sample.fisher, cfg.lambda_floor)?;
                record.curvature = Some(curv.clone());
                record.beta_used = Some(cfg.beta + beta);
                qn_step(&theta, &sample.grad, &curv, cfg.alpha)
            }
        };
        records.push(record);
        match step {
            Ok(next) => theta = next,
            Err(e) => {
                diverged = matches!(e, Error::NonFinite(_));
                log::warn!("{} update failed at iteration {k}: {e}", cfg.method);
                failure = Some(e.to_string());
                break;
            }
        }
    }

    let (reference, error_reference) = match model.optimum() {
        Some(opt) => (Some(opt), ErrorReference::Exact),
        None => {
            let best = records
                .iter()
                .filter(|r| r.j.is_finite())
                .min_by(|a, b| a.j.total_cmp(&b.j))
                .map(|r| ParamVector::new(r.theta.clone()))
                .transpose()?;
            (best, ErrorReference::BestIterateProxy)
        }
    };
    if let Some(opt) = reference {
        let mut prev: Option<f64> = None;
        for r in &mut records {
            let e = ParamVector::new(r.theta.clone()).map(|t| t.distance(&opt)).ok();
            r.err_to_opt = e;
            r.ratio = match (prev, e) {
                (Some(p), Some(e)) if p > 0.0 => Some(e / p),
                _ => None,
            };
            prev = e;
        }
    }
    Ok(LearningTrace {
        method: cfg.method,
        alpha: cfg.alpha,
        records,
        diverged,
        failure,
        error_reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperlinearVerdict {
    /// `r_k = e_{k+1}/e_k` over consecutive finite, nonzero errors.
    pub ratios: Vec<f64>,
    pub last_ratio: f64,
    /// The last three ratios strictly decrease and the last is below
    /// [`SUPERLINEAR_RATIO`].
    pub superlinear_consistent: bool,
}

/// Descriptive superlinear-convergence check on an error sequence `e_k`.
/// The sequence is cut at the first non-finite entry and at the first error
/// below [`DIAGNOSTIC_ERROR_FLOOR`].
pub fn superlinear_diagnostic(errors: &[f64]) -> Result<SuperlinearVerdict> {
    let finite: Vec<f64> = errors
        .iter()
        .copied()
        .take_while(|e| e.is_finite() && *e > DIAGNOSTIC_ERROR_FLOOR)
        .collect();
    if finite.len() < 4 {
        return Err(Error::TraceTooShort {
            needed: 4,
            have: finite.len(),
        });
    }
    let ratios: Vec<f64> = finite
        .windows(2)
        .take_while(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.len() < 3 {
        return Err(Error::TraceTooShort {
            needed: 4,
            have: ratios.len() + 1,
        });
    }
    let tail = &ratios[ratios.len() - 3..];
    let last_ratio = tail[2];
    let consistent = tail[0] > tail[1] && tail[1] > tail[2] && last_ratio < SUPERLINEAR_RATIO;
    Ok(SuperlinearVerdict {
        ratios,
        last_ratio,
        superlinear_consistent: consistent,
    })
}
