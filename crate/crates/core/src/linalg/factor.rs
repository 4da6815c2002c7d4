use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DenseMatrix, DEFAULT_EIG_TOL};

/// Default relative eigenvalue floor for covariance factors.
pub const DEFAULT_FLOOR: f64 = 1e-10;
/// Clamping never goes below this fraction of the largest eigenvalue.
pub const MIN_RELATIVE_FLOOR: f64 = 1e-12;
const PSD_SLACK: f64 = 1e-10;

/// `Sigma = Q^T Q` with `Q = D^{1/2} U^T` from the (clamped) eigendecomposition.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub q: DenseMatrix,
    /// Clamped eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors `U`.
    pub eigenvectors: DenseMatrix,
    /// How many eigenvalues were raised to the floor.
    pub clamped: usize,
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// `Q^T Q`, i.e. the (regularized) covariance this factor represents.
    pub fn gram(&self) -> DenseMatrix {
        self.q.transposed_matmul(&self.q).expect("q is square")
    }
}

/// Factors a symmetric PSD matrix, clamping eigenvalues from below at
/// `max(floor, 1e-12) * lambda_max`.
pub fn factor_covariance(sigma: &DenseMatrix, floor: f64) -> Result<Factorization> {
    let eig = sym_eig(sigma, DEFAULT_EIG_TOL)?;
    let n = eig.dim();
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if !(lambda_max > 0.0) {
        return Err(Error::DegenerateCovariance { lambda_max });
    }
    let lambda_min = eig.eigenvalues[n - 1];
    if lambda_min < -PSD_SLACK * lambda_max {
        return Err(Error::NotPsd {
            min_eigenvalue: lambda_min,
            lambda_max,
        });
    }
    let clamp = floor.max(MIN_RELATIVE_FLOOR) * lambda_max;
    let clamped = eig.eigenvalues.iter().filter(|&&l| l < clamp).count();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(clamp)).collect();
    let u = eig.eigenvectors;
    let q = DenseMatrix::from_fn(n, n, |i, j| eigenvalues[i].sqrt() * u[(j, i)]);
    Ok(Factorization {
        q,
        eigenvalues,
        eigenvectors: u,
        clamped,
    })
}

/// `Q^{-T} = D^{-1/2} U^T`, so that `Q * (Q^{-T})^T = I`.
///
/// Fails when any stored eigenvalue is below `floor * lambda_max`.
pub fn inverse_transpose_factor(f: &Factorization, floor: f64) -> Result<DenseMatrix> {
    let lambda_max = f.lambda_max();
    let threshold = floor * lambda_max;
    for (index, &value) in f.eigenvalues.iter().enumerate() {
        if !(value > 0.0) || value < threshold {
            return Err(Error::Singular {
                index,
                value,
                floor: threshold,
            });
        }
    }
    let n = f.dim();
    let u = &f.eigenvectors;
    Ok(DenseMatrix::from_fn(n, n, |i, j| u[(j, i)] / f.eigenvalues[i].sqrt()))
}
