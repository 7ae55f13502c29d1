//! Small dense linear algebra: rank-3 tensors, symmetric matrices, SPD solves.
//!
//! Matrices are `nalgebra` dense matrices. Problem sizes here are a handful to a
//! few hundred parameters, so everything is dense and allocation is not a concern.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real rank-3 tensor with dims `(n1, n2, n3)`.
///
/// Storage is slice-major: the frontal slice index `k` is outermost, and each
/// `n1 × n2` slice `T(:, :, k)` is stored row-major. The flat offset of
/// `(i, j, k)` is `k·n1·n2 + i·n2 + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    pub fn from_fn(n1: usize, n2: usize, n3: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n1, n2, n3);
        for k in 0..n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    let off = t.offset(i, j, k);
                    t.data[off] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Builds a tensor from a slice-major flat buffer.
    pub fn from_slice_major(n1: usize, n2: usize, n3: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n1 * n2 * n3 {
            return Err(Error::dims("Tensor3::from_slice_major", n1 * n2 * n3, data.len()));
        }
        Ok(Self {
            dims: (n1, n2, n3),
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Flat slice-major buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let (n1, n2, _) = self.dims;
        k * n1 * n2 + i * n2 + j
    }

    fn check(&self, i: usize, j: usize, k: usize) -> Result<()> {
        let (n1, n2, n3) = self.dims;
        if i >= n1 || j >= n2 || k >= n3 {
            return Err(Error::IndexOutOfRange {
                i,
                j,
                k,
                dims: self.dims,
            });
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check(i, j, k)?;
        Ok(self.data[self.offset(i, j, k)])
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) -> Result<()> {
        self.check(i, j, k)?;
        let off = self.offset(i, j, k);
        self.data[off] = value;
        Ok(())
    }

    /// Frontal slice `T(:, :, k)`.
    pub fn slice(&self, k: usize) -> Result<DMatrix<f64>> {
        let (n1, n2, n3) = self.dims;
        if k >= n3 {
            return Err(Error::IndexOutOfRange {
                i: 0,
                j: 0,
                k,
                dims: self.dims,
            });
        }
        let start = k * n1 * n2;
        Ok(DMatrix::from_row_slice(n1, n2, &self.data[start..start + n1 * n2]))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

/// Tensor–vector product `T ⊗ v = Σ_k v_k T(:, :, k)`.
pub fn tensor_vec_product(t: &Tensor3, v: &[f64]) -> Result<DMatrix<f64>> {
    let (n1, n2, n3) = t.dims;
    if v.len() != n3 {
        return Err(Error::dims("tensor_vec_product (n3 vs length(v))", n3, v.len()));
    }
    let mut out = DMatrix::zeros(n1, n2);
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let slice = &t.data[k * n1 * n2..(k + 1) * n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                out[(i, j)] += vk * slice[i * n2 + j];
            }
        }
    }
    Ok(out)
}

/// Real symmetric matrix. Construction always symmetrizes as `(A + Aᵀ)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("SymMatrix::new (square)", m.nrows(), m.ncols()));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::dims("SymMatrix::from_row_slice", n * n, data.len()));
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn scalar(x: f64) -> Self {
        Self(DMatrix::from_element(1, 1, x))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &SymMatrix) -> Result<SymMatrix> {
        if self.n() != other.n() {
            return Err(Error::dims("SymMatrix::add_scaled", self.n(), other.n()));
        }
        Ok(Self(&self.0 + &other.0 * c))
    }

    pub fn shifted(&self, c: f64) -> SymMatrix {
        let n = self.n();
        Self(&self.0 + DMatrix::identity(n, n) * c)
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        Self(&self.0 * c)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
///
/// A non-positive pivot aborts the factorization with
/// [`Error::NotPositiveDefinite`] carrying that pivot.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<DVector<f64>> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::dims("solve_spd (rows of A vs length(b))", n, b.len()));
    }
    let m = a.as_matrix();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    // L y = b
    let mut y = DVector::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    // Lᵀ x = y
    let mut x = DVector::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Smallest eigenvalue. Closed form for `n ≤ 2`, symmetric QR iteration
/// otherwise (accurate to [`crate::tolerances::EIGEN_ABS_TOL`] for
/// well-scaled inputs).
pub fn min_eigenvalue(a: &SymMatrix) -> f64 {
    let m = a.as_matrix();
    match a.n() {
        0 => f64::NAN,
        1 => m[(0, 0)],
        2 => {
            let (p, q, r) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mean = 0.5 * (p + r);
            let half_diff = 0.5 * (p - r);
            mean - half_diff.hypot(q)
        }
        _ => m.clone().symmetric_eigenvalues().min(),
    }
}
