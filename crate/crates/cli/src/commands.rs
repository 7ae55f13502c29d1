use qnpg::env::{CartPoleEnv, LqrEnv};
use qnpg::linalg::min_eigenvalue;
use qnpg::lqr::{self, LqrCurvature};
use qnpg::optimizer::{
    run_learning, CurvatureModel, CurvatureSource, EstimatedModel, LearningTrace, LqrOracleModel, Method,
    OptimizerConfig,
};
use qnpg::policy::{LinearPolicy, ParamVector};
use qnpg::verify::{run_lqr_suite, CheckOutcome};

use crate::config::{default_alpha, Command, MethodChoice, RunConfig};
use crate::error::CliError;
use crate::output::{num, opt, Table};

fn runtime(e: qnpg::Error) -> CliError {
    CliError::Runtime(e.into())
}

pub fn verify_lqr(cfg: &RunConfig) -> Result<Vec<CheckOutcome>, CliError> {
    run_lqr_suite(&cfg.lqr_config()?).map_err(runtime)
}

pub fn verify_table(checks: &[CheckOutcome]) -> Table {
    let mut t = Table::new(["check", "passed", "observed", "tolerance"]);
    for c in checks {
        t.push(vec![c.name.to_string(), c.passed.to_string(), num(c.observed), num(c.tolerance)]);
    }
    t
}

pub fn verify_report(checks: &[CheckOutcome]) -> String {
    let mut s = format!("{:<40} {:>6} {:>12} {:>10}\n", "check", "result", "observed", "tolerance");
    for c in checks {
        s += &format!(
            "{:<40} {:>6} {:>12.3e} {:>10.1e}   {}\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.observed,
            c.tolerance,
            c.detail
        );
    }
    s
}

pub fn scan_hessian(cfg: &RunConfig) -> Result<Vec<LqrCurvature>, CliError> {
    let lqr_cfg = cfg.lqr_config()?;
    let (lo, hi) = (cfg.theta_min.unwrap_or(0.2), cfg.theta_max.unwrap_or(1.5));
    let points = cfg.points.unwrap_or(50);
    if points == 0 || !(lo <= hi) || (points > 1 && lo == hi) {
        return Err(CliError::Config(format!(
            "need theta_min < theta_max and points >= 1 (got [{lo}, {hi}], {points} points)"
        )));
    }
    // the stable set is an interval, so both endpoints suffice
    for theta in [lo, hi] {
        if !lqr::is_stable(theta, &lqr_cfg) {
            return Err(CliError::Config(format!(
                "theta = {theta} is outside the stability domain 1 - γ(1-θ)² > 0"
            )));
        }
    }
    (0..points)
        .map(|i| {
            let theta = if points == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            };
            lqr::curvature(theta, &lqr_cfg).map_err(runtime)
        })
        .collect()
}

pub fn scan_table(rows: &[LqrCurvature], gamma: f64) -> Table {
    let mut t = Table::new(["theta", "J", "dJ", "d2J_exact", "H", "lambda", "gamma_lambda", "fisher"]);
    for r in rows {
        t.push(vec![
            num(r.theta),
            num(r.j),
            num(r.dj),
            num(r.d2j_exact),
            num(r.h),
            num(r.lambda),
            num(gamma * r.lambda),
            num(r.fisher),
        ]);
    }
    t
}

fn optimizer_config(cfg: &RunConfig, command: Command, method: Method, theta0: ParamVector) -> OptimizerConfig {
    let mut oc = OptimizerConfig::new(
        method,
        cfg.alpha.unwrap_or_else(|| default_alpha(command, method)),
        theta0,
    );
    oc.beta = cfg.beta.unwrap_or(oc.beta);
    oc.lambda_floor = cfg.lambda_floor.unwrap_or(oc.lambda_floor);
    oc.max_iters = cfg.iters.unwrap_or(oc.max_iters);
    oc.curvature = cfg.curvature.unwrap_or(oc.curvature);
    oc
}

/// Every selected method from the same `θ₀` and seed.
pub fn learn_lqr(cfg: &RunConfig) -> Result<Vec<LearningTrace>, CliError> {
    let lqr_cfg = cfg.lqr_config()?;
    let theta0 = cfg.theta0(1)?;
    let seed = cfg.seed.unwrap_or(0);
    let env = LqrEnv::new(lqr_cfg).map_err(runtime)?;
    let policy = LinearPolicy::new(1, 1);
    let mut traces = Vec::new();
    for method in cfg.method.unwrap_or(MethodChoice::All).expand(Command::LearnLqr) {
        let oc = optimizer_config(cfg, Command::LearnLqr, method, theta0.clone());
        oc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let trace = match oc.curvature {
            CurvatureSource::Oracle => run_learning(&mut LqrOracleModel { config: lqr_cfg }, &oc),
            CurvatureSource::Estimated => {
                let mut model = EstimatedModel::new(&env, &policy, cfg.rollout_plan(seed)?);
                model.optimum = model_optimum(&lqr_cfg);
                run_learning(&mut model, &oc)
            }
        }
        .map_err(runtime)?;
        log::info!("learn-lqr {method}: {} records, diverged = {}", trace.records.len(), trace.diverged);
        traces.push(trace);
    }
    Ok(traces)
}

fn model_optimum(cfg: &qnpg::env::LqrConfig) -> Option<ParamVector> {
    LqrOracleModel { config: *cfg }.optimum()
}

pub fn learn_lqr_table(traces: &[LearningTrace]) -> Table {
    let mut t = Table::new(["iter", "theta", "J", "grad_norm", "err_to_opt", "ratio", "method", "diverged"]);
    for trace in traces {
        for r in &trace.records {
            t.push(vec![
                r.iter.to_string(),
                num(r.theta[0]),
                num(r.j),
                num(r.grad_norm),
                opt(r.err_to_opt),
                opt(r.ratio),
                trace.method.to_string(),
                trace.diverged.to_string(),
            ]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartpoleRun {
    pub seed: u64,
    pub trace: LearningTrace,
}

impl CartpoleRun {
    pub fn initial_j(&self) -> f64 {
        self.trace.records.first().map_or(f64::NAN, |r| r.j)
    }

    pub fn final_j(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.j)
    }

    /// Smallest eigenvalue over every curvature matrix the updates used.
    pub fn min_curvature_eigenvalue(&self) -> Option<f64> {
        self.trace
            .records
            .iter()
            .filter_map(|r| r.curvature.as_ref().map(min_eigenvalue))
            .reduce(f64::min)
    }
}

/// One learning run per seed `seed, seed + 1, …` and per selected method.
pub fn learn_cartpole(cfg: &RunConfig) -> Result<Vec<CartpoleRun>, CliError> {
    let cp_cfg = cfg.cartpole_config()?;
    let theta0 = cfg.theta0(4)?;
    if cfg.curvature == Some(CurvatureSource::Oracle) {
        return Err(CliError::Config("the cart-pendulum has no curvature oracle; use estimated".into()));
    }
    let env = CartPoleEnv::new(cp_cfg).map_err(runtime)?;
    let policy = LinearPolicy::new(4, 1);
    let base = cfg.seed.unwrap_or(0);
    let mut runs = Vec::new();
    for method in cfg.method.unwrap_or(MethodChoice::QnReg).expand(Command::LearnCartpole) {
        let oc = optimizer_config(cfg, Command::LearnCartpole, method, theta0.clone());
        oc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for k in 0..cfg.seeds.unwrap_or(1) as u64 {
            let seed = base.wrapping_add(k);
            let mut model = EstimatedModel::new(&env, &policy, cfg.rollout_plan(seed)?);
            model.eval_rollouts = cfg.eval_rollouts.unwrap_or(model.eval_rollouts);
            if model.eval_rollouts == 0 {
                return Err(CliError::Config("eval_rollouts must be >= 1".into()));
            }
            let trace = run_learning(&mut model, &oc).map_err(runtime)?;
            let run = CartpoleRun { seed, trace };
            log::info!(
                "learn-cartpole {method} seed {seed}: J {:.5} -> {:.5}, diverged = {}",
                run.initial_j(),
                run.final_j(),
                run.trace.diverged
            );
            runs.push(run);
        }
    }
    Ok(runs)
}

pub fn learn_cartpole_table(runs: &[CartpoleRun]) -> Table {
    let mut t = Table::new([
        "iter",
        "theta_1",
        "theta_2",
        "theta_3",
        "theta_4",
        "J_est",
        "grad_norm",
        "method",
        "seed",
        "beta_used",
        "curvature_min_eig",
        "diverged",
    ]);
    for run in runs {
        for r in &run.trace.records {
            let mut row = vec![r.iter.to_string()];
            row.extend(r.theta.iter().map(|x| num(*x)));
            row.extend([
                num(r.j),
                num(r.grad_norm),
                run.trace.method.to_string(),
                run.seed.to_string(),
                opt(r.beta_used),
                opt(r.curvature.as_ref().map(min_eigenvalue)),
                run.trace.diverged.to_string(),
            ]);
            t.push(row);
        }
    }
    t
}
