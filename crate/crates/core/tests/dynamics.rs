use qnpg::env::{cartpole_derivative, mechanical_energy, rk4_step, CartPoleConfig, CartPoleEnv, EnvModel};

fn max_step_drift(cfg: &CartPoleConfig, s0: [f64; 4], steps: usize) -> f64 {
    let mut s = s0;
    let mut worst: f64 = 0.0;
    let scale_floor = 0.5 * cfg.pole_mass * cfg.gravity * cfg.pole_length;
    for _ in 0..steps {
        let e0 = mechanical_energy(&s, cfg);
        s = rk4_step(|x, a| cartpole_derivative(x, a[0], cfg), &s, &[0.0], cfg.dt).unwrap();
        let e1 = mechanical_energy(&s, cfg);
        worst = worst.max((e1 - e0).abs() / e0.abs().max(scale_floor));
    }
    worst
}

/// Free pendulum: RK4 energy drift stays below 1e-6 relative per step.
#[test]
fn rk4_energy_drift_free_pendulum() {
    let cfg = CartPoleConfig {
        dt: 0.01,
        ..CartPoleConfig::default()
    };
    for &(phi0, omega0) in &[(0.3, 0.0), (1.0, 0.5), (-0.7, 2.0)] {
        let worst = max_step_drift(&cfg, [0.0, 0.0, omega0, phi0], 2000);
        assert!(worst < 1e-6, "φ₀ = {phi0}: per-step drift {worst:e}");
    }
    // near-inverted swings need a finer step
    let fine = CartPoleConfig {
        dt: 0.005,
        ..CartPoleConfig::default()
    };
    let worst = max_step_drift(&fine, [0.0, 0.0, -1.0, 2.5], 4000);
    assert!(worst < 1e-6, "per-step drift {worst:e}");
}

/// Halving the step shrinks the one-step energy error by at least 2^4.5.
#[test]
fn rk4_energy_error_is_high_order() {
    let coarse = CartPoleConfig::default();
    let fine = CartPoleConfig {
        dt: coarse.dt / 2.0,
        ..coarse
    };
    for s0 in [[0.0, 0.0, 0.0, 0.5], [0.3, 0.0, 1.2, -0.4]] {
        let e_coarse = max_step_drift(&coarse, s0, 1);
        let e_fine = max_step_drift(&fine, s0, 1);
        let order = (e_coarse / e_fine).log2();
        assert!(order > 4.5, "local order {order}");
    }
}

#[test]
fn horizontal_momentum_is_conserved_without_force() {
    let cfg = CartPoleConfig {
        dt: 0.005,
        ..CartPoleConfig::default()
    };
    let momentum = |s: &[f64; 4]| {
        (cfg.cart_mass + cfg.pole_mass) * s[0] + 0.5 * cfg.pole_mass * cfg.pole_length * s[2] * s[3].cos()
    };
    let mut s = [0.2, 0.0, 1.0, 0.4];
    let p0 = momentum(&s);
    for _ in 0..1000 {
        s = rk4_step(|x, a| cartpole_derivative(x, a[0], &cfg), &s, &[0.0], cfg.dt).unwrap();
    }
    assert!((momentum(&s) - p0).abs() < 1e-8);
}

#[test]
fn environment_transition_matches_integrator() {
    let env = CartPoleEnv::new(CartPoleConfig::default()).unwrap();
    let s = [0.1, -0.2, 0.3, 0.05];
    let mut next = [0.0; 4];
    let cost = env.step_with_noise(&s, &[0.7], &[0.0; 4], &mut next).unwrap();
    let direct = rk4_step(|x, a| cartpole_derivative(x, a[0], &env.config), &s, &[0.7], env.config.dt).unwrap();
    assert_eq!(next, direct);
    let expected_cost: f64 = s.iter().map(|x| x * x).sum::<f64>() + env.config.action_cost * 0.49;
    assert!((cost - expected_cost).abs() < 1e-15);
}
