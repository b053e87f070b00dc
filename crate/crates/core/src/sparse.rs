//! Thin wrapper over faer's compressed-column storage and sparse Cholesky.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("sparse matrix construction failed: {0}")]
    Build(String),
}

/// Square sparse matrix, symmetric in every use within this crate.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        let t: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let inner = SparseColMat::try_new_from_triplets(n, n, &t).map_err(|e| SparseError::Build(format!("{e:?}")))?;
        Ok(Self { inner })
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.val().len()
    }

    /// Row indices and values of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let cp = self.inner.symbolic().col_ptr();
        let (a, b) = (cp[j], cp[j + 1]);
        (&self.inner.symbolic().row_idx()[a..b], &self.inner.val()[a..b])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n() {
            let (rows, vals) = self.col(j);
            let mut c = 0.0;
            for (&i, &v) in rows.iter().zip(vals) {
                c += x[i] * v;
            }
            s += c * y[j];
        }
        s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.col(j);
        rows.binary_search(&i).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    /// Principal submatrix on `keep` (new index `k` is old index `keep[k]`).
    pub fn principal(&self, keep: &[usize]) -> Result<SparseMatrix, SparseError> {
        let mut new_of = vec![usize::MAX; self.n()];
        for (k, &i) in keep.iter().enumerate() {
            new_of[i] = k;
        }
        let mut t = Vec::with_capacity(self.nnz());
        for (cj, &j) in keep.iter().enumerate() {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                if new_of[i] != usize::MAX {
                    t.push((new_of[i], cj, v));
                }
            }
        }
        SparseMatrix::from_triplets(keep.len(), &t)
    }

    pub fn cholesky(&self) -> Result<SparseCholesky, SparseError> {
        let llt = self
            .inner
            .sp_cholesky(Side::Lower)
            .map_err(|_| SparseError::NotPositiveDefinite)?;
        Ok(SparseCholesky { llt, n: self.n() })
    }
}

pub struct SparseCholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solve for several right-hand sides at once (columns of `b`).
    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn solve_recovers_rhs() {
        let m = tridiag(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let b = m.matvec(&x);
        let y = m.cholesky().unwrap().solve(&b);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((m.bilinear(&x, &x) - x.iter().zip(&b).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn principal_submatrix() {
        let m = tridiag(5);
        let s = m.principal(&[1, 2, 4]).unwrap();
        assert_eq!(s.get(0, 1), -1.0);
        assert_eq!(s.get(1, 2), 0.0);
        assert_eq!(s.get(2, 2), 2.0);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(m.cholesky().is_err());
    }
}
