//! Flat run configuration shared by every subcommand.
//!
//! Each key mirrors a command-line flag. Values come from an optional JSON
//! file (a plain config or a previously written run manifest), are overridden
//! by flags, and are then filled with per-command defaults. The filled config
//! is what gets written to the manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qnpg::env::{CartPoleConfig, LqrConfig};
use qnpg::estimators::RolloutPlan;
use qnpg::optimizer::{CurvatureSource, Method};
use qnpg::policy::ParamVector;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    VerifyLqr,
    ScanHessian,
    LearnLqr,
    LearnCartpole,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::VerifyLqr => "verify-lqr",
            Command::ScanHessian => "scan-hessian",
            Command::LearnLqr => "learn-lqr",
            Command::LearnCartpole => "learn-cartpole",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single update rule, or every rule the command compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Gd,
    Ngd,
    Qn,
    QnReg,
    All,
}

impl MethodChoice {
    /// `all` is gd/ngd/qn on LQR and gd/ngd/qn_reg on the cart-pendulum.
    pub fn expand(self, command: Command) -> Vec<Method> {
        match self {
            MethodChoice::Gd => vec![Method::Gd],
            MethodChoice::Ngd => vec![Method::Ngd],
            MethodChoice::Qn => vec![Method::Qn],
            MethodChoice::QnReg => vec![Method::QnReg],
            MethodChoice::All if command == Command::LearnCartpole => vec![Method::Gd, Method::Ngd, Method::QnReg],
            MethodChoice::All => vec![Method::Gd, Method::Ngd, Method::Qn],
        }
    }
}

impl FromStr for MethodChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(MethodChoice::All),
            other => match other.parse::<Method>() {
                Ok(Method::Gd) => Ok(MethodChoice::Gd),
                Ok(Method::Ngd) => Ok(MethodChoice::Ngd),
                Ok(Method::Qn) => Ok(MethodChoice::Qn),
                Ok(Method::QnReg) => Ok(MethodChoice::QnReg),
                Err(_) => Err(format!("unknown method '{s}' (expected gd, ngd, qn, qn_reg or all)")),
            },
        }
    }
}

pub fn parse_curvature(s: &str) -> Result<CurvatureSource, String> {
    match s {
        "oracle" => Ok(CurvatureSource::Oracle),
        "estimated" => Ok(CurvatureSource::Estimated),
        _ => Err(format!("unknown curvature source '{s}' (expected oracle or estimated)")),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub sigma0_sq: Option<f64>,
    #[serde(default)]
    pub sigma_sq: Option<f64>,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub method: Option<MethodChoice>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub lambda_floor: Option<f64>,
    #[serde(default)]
    pub iters: Option<usize>,
    #[serde(default)]
    pub n_outer: Option<usize>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub n_q: Option<usize>,
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub theta_min: Option<f64>,
    #[serde(default)]
    pub theta_max: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub curvature: Option<CurvatureSource>,
    #[serde(default)]
    pub seeds: Option<usize>,
    #[serde(default)]
    pub noise_var: Option<f64>,
    #[serde(default)]
    pub eval_rollouts: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),+) => {
        RunConfig { $($f: $top.$f.or($base.$f)),+ }
    };
}

impl RunConfig {
    /// Values in `top` win over values in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay_fields!(
            self, top, seed, out, gamma, sigma0_sq, sigma_sq, theta0, method, alpha, beta, lambda_floor, iters,
            n_outer, horizon, n_q, fd_step, theta_min, theta_max, points, curvature, seeds, noise_var,
            eval_rollouts
        )
    }

    /// Reads a flat config or a run manifest. A manifest written by a
    /// different command is rejected.
    pub fn load(path: &Path, command: Command) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))?;
        let is_manifest = value.get("config").is_some() && value.get("command").is_some();
        if is_manifest {
            let manifest: RunManifest = serde_json::from_value(value)
                .map_err(|e| CliError::Config(format!("bad manifest {}: {e}", path.display())))?;
            if manifest.command != command {
                return Err(CliError::Config(format!(
                    "manifest {} was written by {}, not {command}",
                    path.display(),
                    manifest.command
                )));
            }
            Ok(manifest.config)
        } else {
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
        }
    }

    /// Fills every key the command reads with its default.
    pub fn with_defaults(self, command: Command) -> RunConfig {
        let lqr = LqrConfig::default();
        let plan = RolloutPlan::default();
        let mut c = self;
        c.seed.get_or_insert(0);
        match command {
            Command::VerifyLqr | Command::ScanHessian | Command::LearnLqr => {
                c.gamma.get_or_insert(lqr.gamma);
                c.sigma0_sq.get_or_insert(lqr.sigma0_sq);
                c.sigma_sq.get_or_insert(lqr.sigma_sq);
            }
            Command::LearnCartpole => {
                let cp = CartPoleConfig::default();
                c.gamma.get_or_insert(cp.gamma);
                c.noise_var.get_or_insert(cp.noise_var);
            }
        }
        match command {
            Command::VerifyLqr => {}
            Command::ScanHessian => {
                c.theta_min.get_or_insert(0.2);
                c.theta_max.get_or_insert(1.5);
                c.points.get_or_insert(50);
            }
            Command::LearnLqr => {
                c.theta0.get_or_insert_with(|| vec![1.5]);
                c.method.get_or_insert(MethodChoice::All);
                c.beta.get_or_insert(0.0);
                c.lambda_floor.get_or_insert(1e-3);
                c.iters.get_or_insert(20);
                c.curvature.get_or_insert(CurvatureSource::Oracle);
                c.n_outer.get_or_insert(plan.n_outer);
                c.horizon.get_or_insert(plan.horizon);
                c.n_q.get_or_insert(plan.n_q);
                c.fd_step.get_or_insert(plan.fd_step);
            }
            Command::LearnCartpole => {
                c.theta0.get_or_insert_with(|| CARTPOLE_THETA0.to_vec());
                c.method.get_or_insert(MethodChoice::QnReg);
                c.beta.get_or_insert(0.0);
                c.lambda_floor.get_or_insert(1e-2);
                c.iters.get_or_insert(20);
                c.curvature.get_or_insert(CurvatureSource::Estimated);
                c.n_outer.get_or_insert(100);
                c.horizon.get_or_insert(100);
                c.n_q.get_or_insert(4);
                c.fd_step.get_or_insert(plan.fd_step);
                c.seeds.get_or_insert(3);
                c.eval_rollouts.get_or_insert(500);
            }
        }
        c
    }

    pub fn lqr_config(&self) -> Result<LqrConfig, CliError> {
        let d = LqrConfig::default();
        let cfg = LqrConfig {
            sigma0_sq: self.sigma0_sq.unwrap_or(d.sigma0_sq),
            sigma_sq: self.sigma_sq.unwrap_or(d.sigma_sq),
            gamma: self.gamma.unwrap_or(d.gamma),
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn cartpole_config(&self) -> Result<CartPoleConfig, CliError> {
        let d = CartPoleConfig::default();
        let cfg = CartPoleConfig {
            gamma: self.gamma.unwrap_or(d.gamma),
            noise_var: self.noise_var.unwrap_or(d.noise_var),
            ..d
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn rollout_plan(&self, seed: u64) -> Result<RolloutPlan, CliError> {
        let d = RolloutPlan::default();
        let plan = RolloutPlan {
            n_outer: self.n_outer.unwrap_or(d.n_outer),
            horizon: self.horizon.unwrap_or(d.horizon),
            n_q: self.n_q.unwrap_or(d.n_q),
            fd_step: self.fd_step.unwrap_or(d.fd_step),
            seed,
            common_random_numbers: true,
        };
        plan.validate().map_err(config_err)?;
        Ok(plan)
    }

    pub fn theta0(&self, n_params: usize) -> Result<ParamVector, CliError> {
        let values = self.theta0.clone().unwrap_or_default();
        if values.len() != n_params {
            return Err(CliError::Config(format!(
                "theta0 needs {n_params} entries, got {}",
                values.len()
            )));
        }
        ParamVector::new(values).map_err(config_err)
    }
}

/// Hand-tuned gain on `(ẋ, x, φ̇, φ)` that keeps the cart near the origin.
pub const CARTPOLE_THETA0: [f64; 4] = [1.0, 1.0, 0.0, 0.0];

/// Step size used when `alpha` is not set.
pub fn default_alpha(command: Command, method: Method) -> f64 {
    match (command, method) {
        (Command::LearnCartpole, Method::Gd) => 0.01,
        (Command::LearnCartpole, _) => 0.5,
        (_, Method::Gd | Method::Ngd) => 0.2,
        (_, Method::Qn | Method::QnReg) => 1.0,
    }
}

fn config_err(e: qnpg::Error) -> CliError {
    CliError::Config(e.to_string())
}
