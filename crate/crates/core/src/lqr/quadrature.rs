//! Adaptive Simpson quadrature, used to check the closed-form Gaussian-kernel
//! integrals against direct numerical integration.

const MAX_DEPTH: u32 = 48;
// Always refine to at least 2^MIN_DEPTH panels so that integrands which
// vanish at the first few nodes are not accepted as zero.
const MIN_DEPTH: u32 = 6;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&mut f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || (depth <= MAX_DEPTH - MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the standard
/// normal density, `E[f(Z)] ≈ Σ wᵢ f(xᵢ)`, exact for polynomials of degree
/// below `2n`. Built from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite_normal(n: usize) -> Vec<(f64, f64)> {
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], v0 * v0)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Closed form of `∫ (x² + a)(x - b) exp(-c (x - b)²) dx = √π b / c^{3/2}`.
pub fn gaussian_moment_identity(b: f64, c: f64) -> f64 {
    std::f64::consts::PI.sqrt() * b / c.powf(1.5)
}

/// The same integral by quadrature over `b ± 40/√c`.
pub fn gaussian_moment_numeric(a: f64, b: f64, c: f64) -> f64 {
    let half = 40.0 / c.sqrt();
    adaptive_simpson(
        |x| (x * x + a) * (x - b) * (-c * (x - b) * (x - b)).exp(),
        b - half,
        b + half,
        1e-13,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_and_exponentials() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        // all of the mass sits away from the first five nodes
        let v = adaptive_simpson(|x| (-(x - 0.3) * (x - 0.3) * 1e4).exp(), -10.0, 10.0, 1e-14);
        assert!((v - std::f64::consts::PI.sqrt() / 100.0).abs() < 1e-12);
        let v = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn gauss_hermite_normal_moments() {
        let rule = gauss_hermite_normal(8);
        let moment = |k: i32| rule.iter().map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-13);
        assert!((moment(4) - 3.0).abs() < 1e-12);
        assert!((moment(6) - 15.0).abs() < 1e-11);
    }

    #[test]
    fn gaussian_moment_matches_closed_form() {
        for &(a, b, c) in &[(0.0, 1.0, 1.0), (2.5, -0.7, 0.3), (-1.0, 3.0, 5.0), (0.1, 0.0, 2.0)] {
            let closed = gaussian_moment_identity(b, c);
            let numeric = gaussian_moment_numeric(a, b, c);
            assert!((closed - numeric).abs() < 1e-9 * (1.0 + closed.abs()), "{a} {b} {c}: {closed} vs {numeric}");
        }
    }
}
