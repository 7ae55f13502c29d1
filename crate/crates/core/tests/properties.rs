use nalgebra::DMatrix;
use proptest::prelude::*;
use qnpg::linalg::{min_eigenvalue, solve_spd, tensor_vec_product, SymMatrix, Tensor3};
use qnpg::optimizer::{gd_step, ngd_step, qn_step, regularize};
use qnpg::policy::{BilinearPolicy, LinearPolicy, Policy, PolynomialPolicy};

fn brute_force_product(t: &Tensor3, v: &[f64]) -> DMatrix<f64> {
    let (n1, n2, n3) = t.dims();
    let mut out = DMatrix::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let mut acc = 0.0;
            for k in 0..n3 {
                acc += t.get(i, j, k).unwrap() * v[k];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

fn tensor_and_vectors() -> impl Strategy<Value = (Tensor3, Vec<f64>, Vec<f64>, f64)> {
    (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(n1, n2, n3)| {
        (
            prop::collection::vec(-10.0..10.0f64, n1 * n2 * n3),
            prop::collection::vec(-10.0..10.0f64, n3),
            prop::collection::vec(-10.0..10.0f64, n3),
            -5.0..5.0f64,
        )
            .prop_map(move |(data, v, w, c)| (Tensor3::from_slice_major(n1, n2, n3, data).unwrap(), v, w, c))
    })
}

fn random_gram(max_n: usize) -> impl Strategy<Value = (SymMatrix, Vec<f64>)> {
    (1usize..=max_n).prop_flat_map(|n| {
        (prop::collection::vec(-3.0..3.0f64, n * n), prop::collection::vec(-5.0..5.0f64, n)).prop_map(
            move |(g, x)| {
                let g = DMatrix::from_row_slice(n, n, &g);
                let a = g.transpose() * &g + DMatrix::identity(n, n);
                (SymMatrix::new(a).unwrap(), x)
            },
        )
    })
}

fn random_symmetric(max_n: usize) -> impl Strategy<Value = SymMatrix> {
    (1usize..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-4.0..4.0f64, n * n)
            .prop_map(move |d| SymMatrix::new(DMatrix::from_row_slice(n, n, &d)).unwrap())
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tensor_product_matches_brute_force((t, v, _w, _c) in tensor_and_vectors()) {
        let fast = tensor_vec_product(&t, &v).unwrap();
        let slow = brute_force_product(&t, &v);
        for (x, y) in fast.iter().zip(slow.iter()) {
            prop_assert!(rel(*x, *y) < 1e-12);
        }
    }

    #[test]
    fn tensor_product_is_linear((t, v, w, c) in tensor_and_vectors()) {
        let combo: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + c * b).collect();
        let lhs = tensor_vec_product(&t, &combo).unwrap();
        let rhs = tensor_vec_product(&t, &v).unwrap() + tensor_vec_product(&t, &w).unwrap() * c;
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solve_spd_recovers_solution((a, x) in random_gram(6)) {
        let b = a.as_matrix() * nalgebra::DVector::from_column_slice(&x);
        let got = solve_spd(&a, b.as_slice()).unwrap();
        let resid = a.as_matrix() * &got - &b;
        prop_assert!(resid.norm() <= 1e-12 * b.norm().max(1.0) * 10.0);
    }

    #[test]
    fn min_eigenvalue_shifts_with_identity(a in random_symmetric(5), c in -3.0..3.0f64) {
        let shifted = min_eigenvalue(&a.shifted(c));
        prop_assert!((shifted - (min_eigenvalue(&a) + c)).abs() < 1e-10);
    }

    #[test]
    fn regularize_meets_floor(h in random_symmetric(4), floor in 1e-3..1.0f64) {
        let n = h.n();
        let f = SymMatrix::identity(n).add_scaled(0.5, &SymMatrix::new(DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.1 })).unwrap()).unwrap();
        let (reg, beta) = regularize(&h, &f, floor).unwrap();
        prop_assert!(beta >= 0.0);
        prop_assert!(min_eigenvalue(&reg) >= floor - 1e-6);
        if min_eigenvalue(&h) >= floor {
            prop_assert_eq!(beta, 0.0);
        }
    }

    #[test]
    fn ngd_direction_is_scale_invariant((f, g) in random_gram(4), c in 0.01..100.0f64, alpha in 0.01..1.0f64) {
        let theta = vec![0.3; f.n()];
        let scaled_grad: Vec<f64> = g.iter().map(|x| x * c).collect();
        let a = ngd_step(&theta, &g, &f, alpha, 1e-6).unwrap();
        let b = ngd_step(&theta, &scaled_grad, &f.scaled(c), alpha, 1e-6).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()) * 10.0);
        }
    }

    #[test]
    fn qn_with_identity_is_gd(g in prop::collection::vec(-10.0..10.0f64, 1..6), alpha in 0.01..2.0f64) {
        let theta: Vec<f64> = (0..g.len()).map(|i| i as f64 * 0.7 - 1.0).collect();
        let q = qn_step(&theta, &g, &SymMatrix::identity(g.len()), alpha).unwrap();
        let d = gd_step(&theta, &g, alpha).unwrap();
        prop_assert_eq!(q.as_slice(), d.as_slice());
    }
}

/// Central-difference Jacobian and parameter Hessian of `π_θ(s)`.
fn fd_derivatives(policy: &dyn Policy, theta: &[f64], s: &[f64]) -> (DMatrix<f64>, Tensor3) {
    let n = policy.n_params();
    let m = policy.n_action();
    let h1 = 1e-6;
    let h2 = 1e-4;
    let act = |th: &[f64]| policy.action(th, s).unwrap();
    let mut jac = DMatrix::zeros(n, m);
    for i in 0..n {
        let mut p = theta.to_vec();
        let mut q = theta.to_vec();
        p[i] += h1;
        q[i] -= h1;
        let (ap, aq) = (act(&p), act(&q));
        for r in 0..m {
            jac[(i, r)] = (ap[r] - aq[r]) / (2.0 * h1);
        }
    }
    let hess = Tensor3::from_fn(n, n, m, |i, j, r| {
        let shifted = |di: f64, dj: f64| {
            let mut th = theta.to_vec();
            th[i] += di;
            th[j] += dj;
            act(&th)[r]
        };
        (shifted(h2, h2) - shifted(h2, -h2) - shifted(-h2, h2) + shifted(-h2, -h2)) / (4.0 * h2 * h2)
    });
    (jac, hess)
}

fn policy_cases() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (0usize..3, 1usize..4).prop_flat_map(|(family, n_state)| {
        let policy = make_policy(family, n_state);
        (
            Just(family),
            prop::collection::vec(-1.5..1.5f64, policy.n_params()),
            prop::collection::vec(-1.5..1.5f64, n_state),
        )
    })
}

fn make_policy(family: usize, n_state: usize) -> Box<dyn Policy> {
    match family {
        0 => Box::new(LinearPolicy::new(n_state, 2)),
        1 => Box::new(PolynomialPolicy::new(n_state, 3)),
        _ => Box::new(BilinearPolicy::new(n_state)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn policy_derivatives_match_finite_differences((family, theta, s) in policy_cases()) {
        let policy = make_policy(family, s.len());
        let jac = policy.jacobian(&theta, &s).unwrap();
        let hess = policy.param_hessian(&theta, &s).unwrap();
        let (fd_jac, fd_hess) = fd_derivatives(policy.as_ref(), &theta, &s);
        for (x, y) in jac.iter().zip(fd_jac.iter()) {
            prop_assert!((x - y).abs() < 1e-6, "jacobian {} vs {}", x, y);
        }
        for (x, y) in hess.as_slice().iter().zip(fd_hess.as_slice()) {
            prop_assert!((x - y).abs() < 1e-4, "hessian {} vs {}", x, y);
        }
        if policy.is_linear_in_params() {
            prop_assert!(hess.is_zero());
        }
    }
}
