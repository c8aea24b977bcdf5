//! Dense symmetric matrices.
//!
//! [`SymMatrix`] is the carrier for every covariance and precision matrix in
//! the crate. Symmetry is exact: constructors either mirror one triangle or
//! reject input whose entries differ across the diagonal.

use std::ops::Index;

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, rejecting it unless `m[(i, j)] == m[(j, i)]` bit for bit.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::input(format!(
                        "matrix is not symmetric at ({i}, {j}): {} != {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        Ok(SymMatrix { inner: m })
    }

    /// Averages `m` with its transpose.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m)?;
        let n = m.nrows();
        let mut out = m.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(SymMatrix { inner: out })
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle (`i <= j`).
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix { inner: m }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("rows do not form a square matrix"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_upper_fn(dim, |_, _| 0.0)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_upper_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.inner[(i, i)]).collect()
    }

    pub fn scale(&self, a: f64) -> Self {
        SymMatrix {
            inner: &self.inner * a,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(SymMatrix {
            inner: &self.inner + &other.inner,
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(SymMatrix {
            inner: &self.inner - &other.inner,
        })
    }

    /// `tr(self · other)`, computed as the entrywise inner product.
    pub fn trace_product(&self, other: &SymMatrix) -> Result<f64> {
        self.check_same_dim(other)?;
        Ok(self.inner.dot(&other.inner))
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.inner[(i, j)].abs());
            }
        }
        best
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_upper_fn(idx.len(), |a, b| self.inner[(idx[a], idx[b])])
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.inner.clone())
            .ok_or_else(|| Error::not_pd(format!("Cholesky failed on {0}x{0} matrix", self.dim())))
    }

    pub fn is_positive_definite(&self) -> bool {
        Cholesky::new(self.inner.clone()).is_some()
    }

    /// `ln det`, via Cholesky; errors when the matrix is not positive definite.
    pub fn log_det(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        Ok(log_det_of(&chol))
    }

    /// Inverse of a positive definite matrix, symmetrized to remove round-off.
    pub fn inverse(&self) -> Result<SymMatrix> {
        let chol = self.cholesky()?;
        SymMatrix::symmetrize(&chol.inverse())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.inner.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Number of eigenvalues whose magnitude exceeds `rel_cutoff · max |eigenvalue|`.
    pub fn numerical_rank(&self, rel_cutoff: f64) -> usize {
        let ev = self.eigenvalues();
        let top = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if top == 0.0 {
            return 0;
        }
        ev.iter().filter(|v| v.abs() > rel_cutoff * top).count()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.inner
            .iter()
            .zip(other.inner.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    fn check_same_dim(&self, other: &SymMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

pub(crate) fn log_det_of(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::input(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::input("matrix dimension must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        let err = SymMatrix::new(m).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn rejects_empty_and_rectangular() {
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn log_det_and_inverse() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((a.log_det().unwrap() - 3f64.ln()).abs() < 1e-14);
        let inv = a.inverse().unwrap();
        assert!((inv[(0, 0)] - 2.0 / 3.0).abs() < 1e-14);
        assert!((inv[(0, 1)] + 1.0 / 3.0).abs() < 1e-14);
        let bad = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(bad.log_det(), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn rank_of_outer_product() {
        let v = [1.0, -2.0, 0.5];
        let m = SymMatrix::from_upper_fn(3, |i, j| v[i] * v[j]);
        assert_eq!(m.numerical_rank(1e-8), 1);
        assert_eq!(SymMatrix::zeros(3).numerical_rank(1e-8), 0);
    }
}
