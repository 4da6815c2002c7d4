//! Matrix containers and the dense factorizations everything else builds on.

mod dense;
mod eigen;
mod factor;
mod sparse;
mod svd;

pub use dense::DenseMatrix;
pub use eigen::{sym_eig, SymEig, DEFAULT_EIG_TOL};
pub use factor::{
    factor_covariance, inverse_transpose_factor, Factorization, DEFAULT_FLOOR, MIN_RELATIVE_FLOOR,
};
pub use sparse::CsrMatrix;
pub use svd::{svd, Svd};

use crate::error::Result;

/// Sample-by-feature data, dense or sparse. Rows are vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum DataMatrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl DataMatrix {
    pub fn n_rows(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.n_rows(),
            DataMatrix::Sparse(m) => m.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.n_cols(),
            DataMatrix::Sparse(m) => m.n_cols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, DataMatrix::Sparse(_))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            DataMatrix::Dense(m) => m.clone(),
            DataMatrix::Sparse(m) => m.to_dense(),
        }
    }

    pub fn transpose(&self) -> DataMatrix {
        match self {
            DataMatrix::Dense(m) => DataMatrix::Dense(m.transpose()),
            DataMatrix::Sparse(m) => DataMatrix::Sparse(m.transpose()),
        }
    }

    pub fn scale_columns(&self, factors: &[f64]) -> Result<DataMatrix> {
        Ok(match self {
            DataMatrix::Dense(m) => DataMatrix::Dense(m.scale_columns(factors)?),
            DataMatrix::Sparse(m) => DataMatrix::Sparse(m.scale_columns(factors)?),
        })
    }

    /// `self * other` where `other` is dense.
    pub fn mul_dense(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            DataMatrix::Dense(m) => m.matmul(other),
            DataMatrix::Sparse(m) => m.mul_dense(other),
        }
    }

    /// Copies row `i` into `out` (length `n_cols`).
    pub fn copy_row(&self, i: usize, out: &mut [f64]) {
        match self {
            DataMatrix::Dense(m) => out.copy_from_slice(m.row(i)),
            DataMatrix::Sparse(m) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let (cols, vals) = m.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    out[c] = v;
                }
            }
        }
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        match self {
            DataMatrix::Dense(m) => {
                let mut data = Vec::with_capacity(rows.len() * m.n_cols());
                for &r in rows {
                    data.extend_from_slice(m.row(r));
                }
                DataMatrix::Dense(DenseMatrix::from_vec_unchecked(rows.len(), m.n_cols(), data))
            }
            DataMatrix::Sparse(m) => {
                let mut offsets = vec![0];
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                for &r in rows {
                    let (c, v) = m.row(r);
                    cols.extend_from_slice(c);
                    vals.extend_from_slice(v);
                    offsets.push(vals.len());
                }
                DataMatrix::Sparse(
                    CsrMatrix::new(rows.len(), m.n_cols(), offsets, cols, vals)
                        .expect("rows of a valid CSR matrix stay valid"),
                )
            }
        }
    }
}

impl From<DenseMatrix> for DataMatrix {
    fn from(m: DenseMatrix) -> Self {
        DataMatrix::Dense(m)
    }
}

impl From<CsrMatrix> for DataMatrix {
    fn from(m: CsrMatrix) -> Self {
        DataMatrix::Sparse(m)
    }
}

/// `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

/// `a * b^T`.
pub fn matmul_transposed(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul_transposed(b)
}

/// `s * d` for sparse `s`.
pub fn sparse_dense_mul(s: &CsrMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    s.mul_dense(d)
}
