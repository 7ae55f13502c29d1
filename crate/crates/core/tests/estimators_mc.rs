use qnpg::env::{CartPoleConfig, CartPoleEnv, LqrConfig, LqrEnv};
use qnpg::estimators::{
    estimate_all, estimate_fisher, estimate_gradient, estimate_q, grad_a_q, hess_a_q, sample_discounted_states,
    RolloutPlan,
};
use qnpg::linalg::min_eigenvalue;
use qnpg::lqr;
use qnpg::policy::{BilinearPolicy, LinearPolicy, Policy};
use qnpg::rng::stream;

fn lqr_env() -> LqrEnv {
    LqrEnv::new(LqrConfig::default()).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn discounted_second_moment_matches_oracle() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let plan = RolloutPlan {
        n_outer: 1,
        horizon: 200,
        ..RolloutPlan::default()
    };
    let sums: Vec<f64> = (0..10_000u64)
        .map(|i| {
            let mut rng = stream(11, &[i]);
            let v = sample_discounted_states(&env, &policy, &[1.0], &plan, &mut rng).unwrap();
            v.states.iter().map(|w| w.weight * w.state[0] * w.state[0]).sum()
        })
        .collect();
    let (m, se) = mean_se(&sums);
    let oracle = lqr::expected_s2(1.0, &env.config).unwrap();
    assert!((oracle - 1.0).abs() < 1e-12);
    assert!((m - oracle).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn q_rollouts_match_oracle() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let plan = RolloutPlan {
        n_q: 1,
        horizon: 200,
        ..RolloutPlan::default()
    };
    let draws: Vec<f64> = (0..2000u64)
        .map(|i| estimate_q(&env, &policy, &[1.0], &[1.0], &[-1.0], &plan, &mut stream(5, &[i])).unwrap())
        .collect();
    let (m, se) = mean_se(&draws);
    let oracle = lqr::q_function(1.0, -1.0, 1.0, &env.config).unwrap();
    assert!((oracle - 1.9).abs() < 1e-12);
    assert!((m - oracle).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn action_derivatives_match_oracle() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let plan = RolloutPlan {
        n_q: 20,
        horizon: 120,
        ..RolloutPlan::default()
    };
    let grads: Vec<f64> = (0..200u64)
        .map(|i| grad_a_q(&env, &policy, &[1.0], &[1.0], &plan, &mut stream(7, &[i])).unwrap()[0])
        .collect();
    let (m, se) = mean_se(&grads);
    let oracle = lqr::q_action_gradient(1.0, -1.0, 1.0, &env.config).unwrap();
    assert!((oracle + 1.0).abs() < 1e-12);
    assert!((m - oracle).abs() < 3.0 * se, "{m} ± {se}");

    let oracle_h = lqr::q_action_hessian(1.0, &env.config).unwrap();
    for i in 0..20u64 {
        let h = hess_a_q(&env, &policy, &[1.0], &[1.0], &plan, &mut stream(8, &[i])).unwrap();
        // shared noise cancels exactly in the second difference of a quadratic Q
        assert!((h.get(0, 0) - oracle_h).abs() < 1e-8, "{}", h.get(0, 0));
    }
}

#[test]
fn common_random_numbers_reduce_variance() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let base = RolloutPlan {
        n_q: 5,
        horizon: 60,
        ..RolloutPlan::default()
    };
    let independent = RolloutPlan {
        common_random_numbers: false,
        ..base
    };
    let sample = |plan: &RolloutPlan| -> Vec<f64> {
        (0..300u64)
            .map(|i| grad_a_q(&env, &policy, &[0.5], &[0.8], plan, &mut stream(3, &[i])).unwrap()[0])
            .collect()
    };
    let (_, se_crn) = mean_se(&sample(&base));
    let (_, se_ind) = mean_se(&sample(&independent));
    assert!(se_crn < 0.1 * se_ind, "CRN se {se_crn} vs independent {se_ind}");
}

#[test]
fn estimates_at_unit_gain() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let plan = RolloutPlan {
        n_outer: 1000,
        seed: 21,
        ..RolloutPlan::default()
    };
    let est = estimate_all(&env, &policy, &[1.0], &plan).unwrap();
    let checks = [
        ("grad", est.grad.mean[0], est.grad.se[0], 1.0, 0.05),
        ("H", est.h.mean.get(0, 0), est.h.se[(0, 0)], 2.8, 0.28),
        ("F", est.fisher.mean.get(0, 0), est.fisher.se[(0, 0)], 1.0, 0.05),
    ];
    for (name, value, se, oracle, rel) in checks {
        assert!((value - oracle).abs() <= f64::max(rel, 3.0 * se), "{name}: {value} ± {se}");
    }
    assert_eq!(est.n_samples, 1000);
    assert_eq!(est.n_truncated, 0);
    assert!((est.truncation_weight - 0.9f64.powi(80)).abs() < 1e-15);
}

#[test]
fn gradient_vanishes_at_optimum_and_matches_at_zero_gain() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let plan = RolloutPlan {
        n_outer: 500,
        n_q: 10,
        horizon: 150,
        seed: 4,
        ..RolloutPlan::default()
    };
    let ts = lqr::theta_star(&env.config);
    let g = estimate_gradient(&env, &policy, &[ts], &plan).unwrap();
    assert!(g.mean[0].abs() < 3.0 * g.se[0], "{} ± {}", g.mean[0], g.se[0]);

    let g0 = estimate_gradient(&env, &policy, &[0.0], &plan).unwrap();
    let oracle = lqr::gradient(0.0, &env.config).unwrap();
    assert!((oracle + 90.0).abs() < 1e-9);
    assert!((g0.mean[0] - oracle).abs() < 3.0 * g0.se[0], "{} ± {}", g0.mean[0], g0.se[0]);
}

#[test]
fn linear_policy_hessian_has_no_tensor_term() {
    let policy = LinearPolicy::new(3, 2);
    let theta = [0.1, -0.4, 0.3, 0.8, 0.2, -0.5];
    assert!(policy.is_linear_in_params());
    assert!(policy.param_hessian(&theta, &[1.0, -2.0, 0.5]).unwrap().is_zero());
}

/// Oracle for the bilinear policy `a = -θ₀θ₁s` on LQR: the curvature estimate
/// built from the policy's finite-difference derivatives in `θ` and the
/// analytic `Q` of the effective gain `k = θ₀θ₁`.
fn bilinear_oracle(theta: [f64; 2], cfg: &LqrConfig) -> [[f64; 2]; 2] {
    let policy = BilinearPolicy::new(1);
    let k = theta[0] * theta[1];
    let act = |th: [f64; 2]| policy.action(&th, &[1.0]).unwrap()[0];
    let h = 1e-4;
    let dq = lqr::q_action_gradient(1.0, -k, k, cfg).unwrap();
    let d2q = lqr::q_action_hessian(k, cfg).unwrap();
    let es2 = lqr::expected_s2(k, cfg).unwrap();
    let mut out = [[0.0; 2]; 2];
    let grad_pi = |i: usize| {
        let (mut p, mut m) = (theta, theta);
        p[i] += h;
        m[i] -= h;
        (act(p) - act(m)) / (2.0 * h)
    };
    for i in 0..2 {
        for j in 0..2 {
            let shifted = |di: f64, dj: f64| {
                let mut th = theta;
                th[i] += di;
                th[j] += dj;
                act(th)
            };
            let d2pi = (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) / (4.0 * h * h);
            // every factor is linear in s at s = 1, so the state average is E_s[s²]
            out[i][j] = es2 * (d2pi * dq + grad_pi(i) * d2q * grad_pi(j));
        }
    }
    out
}

#[test]
fn bilinear_policy_hessian_matches_finite_difference_oracle() {
    let env = lqr_env();
    let policy = BilinearPolicy::new(1);
    let theta = [0.8, 1.25];
    let plan = RolloutPlan {
        n_outer: 1000,
        n_q: 20,
        seed: 9,
        ..RolloutPlan::default()
    };
    let est = estimate_all(&env, &policy, &theta, &plan).unwrap();
    let oracle = bilinear_oracle(theta, &env.config);
    for i in 0..2 {
        for j in 0..2 {
            let (v, se) = (est.h.mean.get(i, j), est.h.se[(i, j)]);
            assert!((v - oracle[i][j]).abs() < 3.0 * se + 1e-6, "H[{i}{j}] = {v} ± {se} vs {}", oracle[i][j]);
        }
    }
    // J as a function of θ is J_lqr(θ₀θ₁): its gradient is J'(k)·(θ₁, θ₀)
    let dj = lqr::gradient(1.0, &env.config).unwrap();
    for (i, factor) in [theta[1], theta[0]].into_iter().enumerate() {
        let (g, se) = (est.grad.mean[i], est.grad.se[i]);
        assert!((g - dj * factor).abs() < 3.0 * se, "grad[{i}] = {g} ± {se}");
    }
}

#[test]
fn curvature_estimates_keep_their_structure() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let ts = lqr::theta_star(&env.config);
    let plan = RolloutPlan {
        n_outer: 400,
        n_q: 10,
        seed: 2,
        ..RolloutPlan::default()
    };
    let est = estimate_all(&env, &policy, &[ts], &plan).unwrap();
    assert!(min_eigenvalue(&est.h.mean) > 0.0);
    assert!(min_eigenvalue(&est.fisher.mean) >= 0.0);

    let cp = CartPoleEnv::new(CartPoleConfig::default()).unwrap();
    let gain = LinearPolicy::new(4, 1);
    let theta = [-0.5, -0.3, 1.5, 3.0];
    let plan = RolloutPlan {
        n_outer: 16,
        horizon: 30,
        n_q: 2,
        seed: 5,
        ..RolloutPlan::default()
    };
    let est = estimate_all(&cp, &gain, &theta, &plan).unwrap();
    let h = est.h.mean.as_matrix();
    assert_eq!(h, &h.transpose());
    let f = estimate_fisher(&cp, &gain, &theta, &plan).unwrap();
    assert!(min_eigenvalue(&f.mean) >= -1e-12);
    assert_eq!(f.mean, est.fisher.mean);
}

/// Larger budgets (T and n_outer together) bring all three estimates closer
/// to the oracle. A single draw is dominated by sampling noise at these
/// budgets, so the error is the root-mean-square over fixed seeds.
#[test]
fn error_shrinks_with_budget() {
    let env = lqr_env();
    let policy = LinearPolicy::new(1, 1);
    let seeds = 100..108u64;
    let mut previous: Option<[f64; 3]> = None;
    for (horizon, n_outer) in [(40, 500), (80, 2000), (160, 8000)] {
        let mut sq = [0.0; 3];
        for seed in seeds.clone() {
            let plan = RolloutPlan {
                n_outer,
                horizon,
                n_q: 1,
                seed,
                ..RolloutPlan::default()
            };
            let est = estimate_all(&env, &policy, &[1.0], &plan).unwrap();
            let err = [est.grad.mean[0] - 1.0, est.h.mean.get(0, 0) - 2.8, est.fisher.mean.get(0, 0) - 1.0];
            for k in 0..3 {
                sq[k] += err[k] * err[k];
            }
        }
        let rmse = sq.map(|v| (v / seeds.clone().count() as f64).sqrt());
        eprintln!("T = {horizon}, n_outer = {n_outer}: rmse {rmse:?}");
        if let Some(prev) = previous {
            for k in 0..3 {
                assert!(rmse[k] < prev[k], "component {k}: {} !< {}", rmse[k], prev[k]);
            }
        }
        previous = Some(rmse);
    }
}
