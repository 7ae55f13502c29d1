//! Parameterized deterministic policies `a = π_θ(s)` with exact first and
//! second derivatives with respect to the parameters.
//!
//! Matrix gains are vectorized row-major: for an `n_a × n_s` gain `Θ`,
//! `θ[r·n_s + c] = Θ[r][c]`.

use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor3;

/// Flat policy parameter vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("ParamVector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

/// A differentiable deterministic policy.
///
/// `jacobian` is `n_θ × n_a` (column `r` is `∇_θ a_r`); `param_hessian` has
/// dims `(n_θ, n_θ, n_a)` with frontal slice `r` equal to `∇²_θ a_r`.
pub trait Policy: Send + Sync + std::fmt::Debug {
    fn n_state(&self) -> usize;
    fn n_action(&self) -> usize;
    fn n_params(&self) -> usize;

    /// Writes `π_θ(s)` into `out` without allocating. Dimensions are not
    /// checked here; see [`Policy::action`].
    fn action_into(&self, theta: &[f64], s: &[f64], out: &mut [f64]);

    fn jacobian_unchecked(&self, theta: &[f64], s: &[f64]) -> DMatrix<f64>;

    fn param_hessian_unchecked(&self, theta: &[f64], s: &[f64]) -> Tensor3;

    fn check_dims(&self, theta: &[f64], s: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::dims("policy parameters", self.n_params(), theta.len()));
        }
        if s.len() != self.n_state() {
            return Err(Error::dims("policy state", self.n_state(), s.len()));
        }
        Ok(())
    }

    fn action(&self, theta: &[f64], s: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(theta, s)?;
        let mut out = vec![0.0; self.n_action()];
        self.action_into(theta, s, &mut out);
        Ok(out)
    }

    fn jacobian(&self, theta: &[f64], s: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dims(theta, s)?;
        Ok(self.jacobian_unchecked(theta, s))
    }

    fn param_hessian(&self, theta: &[f64], s: &[f64]) -> Result<Tensor3> {
        self.check_dims(theta, s)?;
        Ok(self.param_hessian_unchecked(theta, s))
    }

    /// True when `∇²_θ π` vanishes identically, letting estimators skip it.
    fn is_linear_in_params(&self) -> bool {
        false
    }
}

/// Linear state feedback `a = -Θ s`, `Θ` an `n_a × n_s` gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub n_state: usize,
    pub n_action: usize,
}

impl LinearPolicy {
    pub fn new(n_state: usize, n_action: usize) -> Self {
        Self { n_state, n_action }
    }
}

impl Policy for LinearPolicy {
    fn n_state(&self) -> usize {
        self.n_state
    }

    fn n_action(&self) -> usize {
        self.n_action
    }

    fn n_params(&self) -> usize {
        self.n_state * self.n_action
    }

    #[inline]
    fn action_into(&self, theta: &[f64], s: &[f64], out: &mut [f64]) {
        for (r, a) in out.iter_mut().enumerate() {
            let row = &theta[r * self.n_state..(r + 1) * self.n_state];
            *a = -row.iter().zip(s).map(|(t, x)| t * x).sum::<f64>();
        }
    }

    fn jacobian_unchecked(&self, _theta: &[f64], s: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.n_params(), self.n_action);
        for r in 0..self.n_action {
            for (c, &sc) in s.iter().enumerate() {
                jac[(r * self.n_state + c, r)] = -sc;
            }
        }
        jac
    }

    fn param_hessian_unchecked(&self, _theta: &[f64], _s: &[f64]) -> Tensor3 {
        Tensor3::zeros(self.n_params(), self.n_params(), self.n_action)
    }

    fn is_linear_in_params(&self) -> bool {
        true
    }
}

/// Scalar-action polynomial feature policy `a = -θᵀφ(s)` with
/// `φ(s) = (s, s², …, s^degree)` taken elementwise, powers outermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialPolicy {
    pub n_state: usize,
    pub degree: usize,
}

impl PolynomialPolicy {
    pub fn new(n_state: usize, degree: usize) -> Self {
        Self { n_state, degree }
    }

    pub fn features(&self, s: &[f64]) -> Vec<f64> {
        let mut phi = Vec::with_capacity(self.n_params());
        for p in 1..=self.degree {
            phi.extend(s.iter().map(|x| x.powi(p as i32)));
        }
        phi
    }
}

impl Policy for PolynomialPolicy {
    fn n_state(&self) -> usize {
        self.n_state
    }

    fn n_action(&self) -> usize {
        1
    }

    fn n_params(&self) -> usize {
        self.n_state * self.degree
    }

    fn action_into(&self, theta: &[f64], s: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for p in 1..=self.degree {
            let block = &theta[(p - 1) * self.n_state..p * self.n_state];
            acc += block
                .iter()
                .zip(s)
                .map(|(t, x)| t * x.powi(p as i32))
                .sum::<f64>();
        }
        out[0] = -acc;
    }

    fn jacobian_unchecked(&self, _theta: &[f64], s: &[f64]) -> DMatrix<f64> {
        DMatrix::from_iterator(self.n_params(), 1, self.features(s).into_iter().map(|f| -f))
    }

    fn param_hessian_unchecked(&self, _theta: &[f64], _s: &[f64]) -> Tensor3 {
        Tensor3::zeros(self.n_params(), self.n_params(), 1)
    }

    fn is_linear_in_params(&self) -> bool {
        true
    }
}

/// Scalar-action policy that is bilinear in its parameters:
/// `a = -θ₀ · (θ₁, …, θ_n)ᵀ s`. With one state this is `a = -θ₁θ₂ s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilinearPolicy {
    pub n_state: usize,
}

impl BilinearPolicy {
    pub fn new(n_state: usize) -> Self {
        Self { n_state }
    }
}

impl Policy for BilinearPolicy {
    fn n_state(&self) -> usize {
        self.n_state
    }

    fn n_action(&self) -> usize {
        1
    }

    fn n_params(&self) -> usize {
        self.n_state + 1
    }

    fn action_into(&self, theta: &[f64], s: &[f64], out: &mut [f64]) {
        let ws: f64 = theta[1..].iter().zip(s).map(|(w, x)| w * x).sum();
        out[0] = -theta[0] * ws;
    }

    fn jacobian_unchecked(&self, theta: &[f64], s: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.n_params(), 1);
        jac[(0, 0)] = -theta[1..].iter().zip(s).map(|(w, x)| w * x).sum::<f64>();
        for (i, &x) in s.iter().enumerate() {
            jac[(i + 1, 0)] = -theta[0] * x;
        }
        jac
    }

    fn param_hessian_unchecked(&self, _theta: &[f64], s: &[f64]) -> Tensor3 {
        let n = self.n_params();
        Tensor3::from_fn(n, n, 1, |i, j, _| match (i, j) {
            (0, j) if j > 0 => -s[j - 1],
            (i, 0) if i > 0 => -s[i - 1],
            _ => 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_scalar_action() {
        let p = LinearPolicy::new(1, 1);
        assert_eq!(p.action(&[1.0], &[0.5]).unwrap(), vec![-0.5]);
    }

    #[test]
    fn linear_zero_gain() {
        let p = LinearPolicy::new(4, 1);
        assert_eq!(p.action(&[0.0; 4], &[1.0, -2.0, 3.0, 0.4]).unwrap(), vec![0.0]);
    }

    #[test]
    fn linear_matrix_gain_is_row_major() {
        let p = LinearPolicy::new(2, 2);
        let a = p.action(&[1.0, 2.0, 3.0, 4.0], &[1.0, 10.0]).unwrap();
        assert_eq!(a, vec![-21.0, -43.0]);
    }

    #[test]
    fn polynomial_hand_evaluation() {
        let p = PolynomialPolicy::new(1, 2);
        assert_eq!(p.action(&[1.0, 2.0], &[0.5]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn linear_jacobian_is_minus_state() {
        let p = LinearPolicy::new(1, 1);
        assert_eq!(p.jacobian(&[3.0], &[0.7]).unwrap()[(0, 0)], -0.7);
        let p4 = LinearPolicy::new(4, 1);
        assert!(p4.jacobian(&[1.0; 4], &[0.0; 4]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_hessian_vanishes() {
        let p = LinearPolicy::new(4, 2);
        let h = p.param_hessian(&[0.3; 8], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(h.dims(), (8, 8, 2));
        assert!(h.is_zero());
    }

    #[test]
    fn bilinear_hessian_off_diagonal() {
        let p = BilinearPolicy::new(1);
        let h = p.param_hessian(&[0.4, 1.7], &[0.9]).unwrap();
        assert_eq!(h.get(0, 1, 0).unwrap(), -0.9);
        assert_eq!(h.get(1, 0, 0).unwrap(), -0.9);
        assert_eq!(h.get(0, 0, 0).unwrap(), 0.0);
        assert_eq!(h.get(1, 1, 0).unwrap(), 0.0);
        assert_eq!(p.action(&[0.4, 1.7], &[0.9]).unwrap()[0], -0.4 * 1.7 * 0.9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = LinearPolicy::new(2, 1);
        assert!(matches!(p.action(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(p.jacobian(&[1.0, 2.0], &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            p.param_hessian(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn param_vector_rejects_non_finite() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<ParamVector>("[1.0, 2.0]").is_ok());
    }
}
