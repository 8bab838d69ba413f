use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};
use serde::{Deserialize, Serialize};

use super::NumError;

/// A dense real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    pub(crate) data: Vec<f64>,
}

impl DenseVector {
    /// Checked constructor: rejects empty vectors and non-finite entries.
    pub fn from_vec(data: Vec<f64>) -> Result<Self, NumError> {
        if data.is_empty() {
            return Err(NumError::DimensionMismatch);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NotFinite);
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    pub fn norm2(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

/// A dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub(crate) data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Checked constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(NumError::DimensionMismatch);
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumError::DimensionMismatch);
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NotFinite);
        }
        Ok(Self {
            data,
            rows: rows.len(),
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_nested_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Symmetry within `tol * max_abs`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let tol = rel_tol * self.max_abs();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if libm::fabs(self[(i, j)] - self[(j, i)]) > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn matvec(&self, v: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.cols, v.dim());
        let data = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        DenseVector { data }
    }

    /// self^T v.
    pub fn t_matvec(&self, v: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.rows, v.dim());
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        DenseVector { data: out }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|a| a * s).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Rank-one product v w^T.
    pub fn outer(v: &DenseVector, w: &DenseVector) -> Self {
        let mut m = Self::zeros(v.dim(), w.dim());
        for i in 0..v.dim() {
            for j in 0..w.dim() {
                m[(i, j)] = v[i] * w[j];
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    /// v^T M v.
    pub fn quad_form(&self, v: &DenseVector) -> f64 {
        v.dot(&self.matvec(v))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

const SYMMETRY_REL_TOL: f64 = 1e-12;
const PIVOT_REL_TOL: f64 = 1e-12;

/// A symmetric positive definite matrix with its lower Cholesky factor
/// computed on construction.
///
/// Serializes as nested rows; deserialization re-runs the Cholesky check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SpdMatrix {
    base: DenseMatrix,
    chol: DenseMatrix,
}

impl TryFrom<Vec<Vec<f64>>> for SpdMatrix {
    type Error = NumError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, NumError> {
        SpdMatrix::from_symmetric(DenseMatrix::from_rows(&rows)?)
    }
}

impl From<SpdMatrix> for Vec<Vec<f64>> {
    fn from(m: SpdMatrix) -> Self {
        m.base.to_nested_rows()
    }
}

impl SpdMatrix {
    /// Cholesky-decomposes a symmetric matrix. A pivot at or below
    /// `1e-12 * max diagonal` is treated as not positive definite rather than
    /// silently regularized.
    pub fn from_symmetric(m: DenseMatrix) -> Result<Self, NumError> {
        if m.rows() != m.cols() {
            return Err(NumError::DimensionMismatch);
        }
        if !m.is_finite() {
            return Err(NumError::NotFinite);
        }
        if !m.is_symmetric(SYMMETRY_REL_TOL) {
            return Err(NumError::NotSymmetric);
        }
        let n = m.rows();
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(libm::fabs(m[(i, i)])));
        let pivot_tol = PIVOT_REL_TOL * max_diag;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= pivot_tol || !d.is_finite() {
                return Err(NumError::NotPositiveDefinite);
            }
            let ljj = libm::sqrt(d);
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { base: m, chol: l })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            base: DenseMatrix::identity(n),
            chol: DenseMatrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.rows()
    }

    pub fn base(&self) -> &DenseMatrix {
        &self.base
    }

    pub fn chol(&self) -> &DenseMatrix {
        &self.chol
    }

    pub fn mul_vec(&self, v: &DenseVector) -> DenseVector {
        self.base.matvec(v)
    }

    /// Solves M x = b via the Cholesky factor.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector, NumError> {
        let n = self.dim();
        if b.dim() != n {
            return Err(NumError::DimensionMismatch);
        }
        // forward: L y = b
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.chol[(i, k)] * y[k];
            }
            y[i] = s / self.chol[(i, i)];
        }
        // backward: L^T x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.chol[(k, i)] * x[k];
            }
            x[i] = s / self.chol[(i, i)];
        }
        Ok(DenseVector { data: x })
    }

    /// Explicit inverse; the result is symmetrized before re-factorization.
    pub fn inverse(&self) -> Result<SpdMatrix, NumError> {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DenseVector::zeros(n);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        SpdMatrix::from_symmetric(inv)
    }

    /// v^T M^{-1} v.
    pub fn inv_quad_form(&self, v: &DenseVector) -> Result<f64, NumError> {
        Ok(v.dot(&self.solve(v)?))
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim())
            .map(|i| 2.0 * libm::log(self.chol[(i, i)]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_identity() {
        let m = SpdMatrix::from_symmetric(DenseMatrix::identity(3)).unwrap();
        assert_eq!(m.chol(), &DenseMatrix::identity(3));
    }

    #[test]
    fn cholesky_diagonal() {
        let m = DenseMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let s = SpdMatrix::from_symmetric(m).unwrap();
        assert_relative_eq!(s.chol()[(0, 0)], 2.0);
        assert_relative_eq!(s.chol()[(1, 1)], 3.0);
        assert_eq!(s.chol()[(0, 1)], 0.0);
        assert_eq!(s.chol()[(1, 0)], 0.0);
    }

    #[test]
    fn cholesky_indefinite_rejected() {
        // eigenvalues 3 and -1
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(
            SpdMatrix::from_symmetric(m),
            Err(NumError::NotPositiveDefinite)
        );
    }

    #[test]
    fn solve_trivial() {
        let s = SpdMatrix::identity(2);
        let b = DenseVector::from_vec(vec![3.0, 4.0]).unwrap();
        assert_eq!(s.solve(&b).unwrap(), b);

        let m = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let s = SpdMatrix::from_symmetric(m).unwrap();
        let b = DenseVector::from_vec(vec![2.0, 4.0]).unwrap();
        let x = s.solve(&b).unwrap();
        assert_relative_eq!(x[0], 1.0);
        assert_relative_eq!(x[1], 1.0);
    }

    fn random_spd(n: usize, seed: u64) -> SpdMatrix {
        let mut rng = crate::random::Rng::from_seed(seed);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.standard_normal();
            }
        }
        // A A^T + n I is comfortably SPD
        let at = a.transpose();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[(i, k)] * at[(k, j)];
                }
                m[(i, j)] = s;
            }
        }
        for i in 0..n {
            m[(i, i)] += n as f64;
        }
        SpdMatrix::from_symmetric(m).unwrap()
    }

    #[test]
    fn solve_residual_random_spd() {
        let s = random_spd(5, 42);
        let b = DenseVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0]).unwrap();
        let x = s.solve(&b).unwrap();
        let r = s.mul_vec(&x).sub(&b);
        assert!(r.norm2() / b.norm2() < 1e-9);
    }

    #[test]
    fn inverse_trivial_and_random() {
        let s = SpdMatrix::identity(4);
        let inv = s.inverse().unwrap();
        assert_eq!(inv.base(), &DenseMatrix::identity(4));

        let m = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let s = SpdMatrix::from_symmetric(m).unwrap();
        let inv = s.inverse().unwrap();
        assert_relative_eq!(inv.base()[(0, 0)], 0.5);
        assert_relative_eq!(inv.base()[(1, 1)], 0.25);

        let s = random_spd(6, 7);
        let inv = s.inverse().unwrap();
        // M * inv should be the identity entrywise
        let n = s.dim();
        for i in 0..n {
            let mut e = DenseVector::zeros(n);
            e[i] = 1.0;
            let col = inv.mul_vec(&e);
            let prod = s.base().matvec(&col);
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[j] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chol_reconstructs_base() {
        let s = random_spd(8, 9);
        let l = s.chol();
        let n = s.dim();
        let scale = s.base().max_abs();
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += l[(i, k)] * l[(j, k)];
                }
                assert!((v - s.base()[(i, j)]).abs() <= 1e-10 * scale);
            }
        }
    }
}
