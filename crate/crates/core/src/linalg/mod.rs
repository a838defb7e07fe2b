//! One factorization contract over dense and sparse symmetric positive-definite
//! matrices: Cholesky, log-determinant, solves, quadratic forms and traces.

mod dense;
mod ordering;
mod sparse;

use nalgebra::DMatrix;

pub use dense::DenseCholesky;
pub use ordering::nested_dissection;
pub use sparse::{CsrMatrix, SelectedInverse, SparseCholesky};

use crate::error::{Error, Result};

/// A general matrix operand, dense or sparse.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl Matrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Matrix::Dense(m) => m.shape(),
            Matrix::Sparse(m) => (m.nrows(), m.ncols()),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Matrix::Dense(m) => m[(i, j)],
            Matrix::Sparse(m) => m.get(i, j),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Matrix::Dense(m) => m.clone(),
            Matrix::Sparse(m) => m.to_dense(),
        }
    }
}

/// Symmetric positive-definite matrix (symmetry checked on construction,
/// definiteness established by factorization).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n != m.ncols() {
            return Err(Error::Dimension {
                expected: n,
                got: m.ncols(),
            });
        }
        for j in 0..n {
            for i in j + 1..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::Contract(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(Matrix::Dense(m)))
    }

    pub fn sparse(m: CsrMatrix) -> Result<Self> {
        if m.nrows() == 0 || !m.is_symmetric() {
            return Err(Error::Contract("sparse matrix is empty or not symmetric".into()));
        }
        for i in 0..m.nrows() {
            if m.row(i).0.binary_search(&i).is_err() {
                return Err(Error::Contract(format!("diagonal entry {i} is not stored")));
            }
        }
        Ok(Self(Matrix::Sparse(m)))
    }

    pub fn order(&self) -> usize {
        self.0.shape().0
    }

    pub fn storage(&self) -> &Matrix {
        &self.0
    }

    pub fn into_storage(self) -> Matrix {
        self.0
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.0, Matrix::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.0.to_dense()
    }
}

#[derive(Debug, Clone)]
pub enum CholeskyFactor {
    Dense(DenseCholesky),
    Sparse(SparseCholesky),
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        match self {
            CholeskyFactor::Dense(f) => f.order(),
            CholeskyFactor::Sparse(f) => f.order(),
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            CholeskyFactor::Dense(f) => f.log_det(),
            CholeskyFactor::Sparse(f) => f.log_det(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            CholeskyFactor::Dense(f) => f.solve(b),
            CholeskyFactor::Sparse(f) => f.solve(b),
        }
    }

    pub fn quad_form(&self, z: &[f64]) -> Result<f64> {
        match self {
            CholeskyFactor::Dense(f) => f.quad_form(z),
            CholeskyFactor::Sparse(f) => f.quad_form(z),
        }
    }

    /// `L L^T` in the original ordering.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        match self {
            CholeskyFactor::Dense(f) => f.lower() * f.lower().transpose(),
            CholeskyFactor::Sparse(f) => f.reconstruct(),
        }
    }
}

/// Cholesky factorization; the sparse path applies a fill-reducing permutation.
pub fn cholesky(a: &SpdMatrix) -> Result<CholeskyFactor> {
    match a.storage() {
        Matrix::Dense(m) => DenseCholesky::factor(m).map(CholeskyFactor::Dense),
        Matrix::Sparse(m) => SparseCholesky::factor(m).map(CholeskyFactor::Sparse),
    }
}

/// Solve `A x = b` given the factor of `A`.
pub fn solve(f: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}

/// `z^T A^{-1} z`.
pub fn quad_form(f: &CholeskyFactor, z: &[f64]) -> Result<f64> {
    f.quad_form(z)
}

fn same_square(a: (usize, usize), b: (usize, usize)) -> Result<usize> {
    if a.0 != a.1 {
        return Err(Error::Dimension {
            expected: a.0,
            got: a.1,
        });
    }
    if a != b {
        return Err(Error::Dimension {
            expected: a.0,
            got: b.0,
        });
    }
    Ok(a.0)
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &Matrix, b: &Matrix) -> Result<f64> {
    let n = same_square(a.shape(), b.shape())?;
    Ok(match (a, b) {
        (Matrix::Dense(a), Matrix::Dense(b)) => {
            // sum_ij a_ij b_ji, walking b by columns
            let mut s = 0.0;
            for i in 0..n {
                let bcol = b.column(i);
                for j in 0..n {
                    s += a[(i, j)] * bcol[j];
                }
            }
            s
        }
        (Matrix::Sparse(s), Matrix::Dense(d)) | (Matrix::Dense(d), Matrix::Sparse(s)) => {
            s.iter().map(|(i, j, v)| v * d[(j, i)]).sum()
        }
        (Matrix::Sparse(a), Matrix::Sparse(b)) => a.iter().map(|(i, j, v)| v * b.get(j, i)).sum(),
    })
}

/// Elementwise (Schur) product; sparse operands keep the intersection of patterns.
pub fn schur(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            expected: a.shape().0,
            got: b.shape().0,
        });
    }
    Ok(match (a, b) {
        (Matrix::Dense(a), Matrix::Dense(b)) => Matrix::Dense(a.component_mul(b)),
        (Matrix::Sparse(s), Matrix::Dense(d)) | (Matrix::Dense(d), Matrix::Sparse(s)) => {
            let t = s.iter().map(|(i, j, v)| (i, j, v * d[(i, j)])).collect();
            Matrix::Sparse(CsrMatrix::from_triplets(s.nrows(), s.ncols(), t)?)
        }
        (Matrix::Sparse(a), Matrix::Sparse(b)) => {
            let mut t = Vec::new();
            for r in 0..a.nrows() {
                let (ca, va) = a.row(r);
                let (cb, vb) = b.row(r);
                let (mut p, mut q) = (0, 0);
                while p < ca.len() && q < cb.len() {
                    match ca[p].cmp(&cb[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            t.push((r, ca[p], va[p] * vb[q]));
                            p += 1;
                            q += 1;
                        }
                    }
                }
            }
            Matrix::Sparse(CsrMatrix::from_triplets(a.nrows(), a.ncols(), t)?)
        }
    })
}

/// Determinant of a small dense symmetric matrix via Cholesky, or an error
/// when the matrix is not positive definite.
pub fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    DenseCholesky::factor(m)
        .map(|f| f.log_det())
        .map_err(|_| Error::Definiteness)
}
