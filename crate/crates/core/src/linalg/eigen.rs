use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Default relative off-diagonal tolerance for [`sym_eig`].
pub const DEFAULT_EIG_TOL: f64 = 1e-15;

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigendecomposition `S = V diag(lambda) V^T` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: DenseMatrix,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(lambda)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let scaled = DenseMatrix::from_fn(n, n, |i, j| v[(i, j)] * f(self.eigenvalues[j]));
        scaled
            .matmul_transposed(v)
            .expect("eigenvector matrix is square")
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm is
/// at most `tol * ||S||_F`. Eigenvalues come back sorted descending; ties keep
/// the order in which the rotations left them.
pub fn sym_eig(s: &DenseMatrix, tol: f64) -> Result<SymEig> {
    if !s.is_square() {
        return Err(Error::dim(
            "sym_eig",
            format!("expected a square matrix, got {:?}", s.shape()),
        ));
    }
    let n = s.n_rows();
    let scale = s.max_abs();
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let mut a = s.symmetrized().into_vec();
    let mut v = DenseMatrix::identity(n).into_vec();
    let fro = s.frobenius_norm();
    let target = tol * fro;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a, n);
        if off <= target || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // negligible relative to both diagonal entries
                let g = 100.0 * apq.abs();
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, n, p, q, c, sn);
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a, n);
        if !(off <= target || off == 0.0) {
            return Err(Error::Convergence {
                op: "sym_eig",
                sweeps: MAX_SWEEPS,
            });
        }
    }

    let raw: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]));
    let eigenvalues = order.iter().map(|&i| raw[i]).collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// `A <- P^T A P`, `V <- V P` for the plane rotation in (p, q).
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = c * akp - s * akq;
        a[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = c * apk - s * aqk;
        a[q * n + k] = s * apk + c * aqk;
    }
    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = c * vkp - s * vkq;
        v[k * n + q] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.add(&m.transpose()).unwrap()
    }

    fn check_invariants(s: &DenseMatrix, e: &SymEig) {
        let n = s.n_rows();
        let v = &e.eigenvectors;
        let vtv = v.transposed_matmul(v).unwrap();
        let ortho = vtv.sub(&DenseMatrix::identity(n)).unwrap().frobenius_norm();
        assert!(ortho <= 1e-9, "orthogonality {ortho}");
        let fro = s.frobenius_norm();
        for i in 0..n {
            let col = v.column(i);
            let sv = s.mul_vec(&col).unwrap();
            let res: f64 = sv
                .iter()
                .zip(&col)
                .map(|(a, b)| (a - e.eigenvalues[i] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-8 * fro.max(f64::MIN_POSITIVE), "residual {res}");
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let e = sym_eig(&DenseMatrix::identity(3), DEFAULT_EIG_TOL).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        check_invariants(&DenseMatrix::identity(3), &e);
    }

    #[test]
    fn diagonal_input_is_returned_sorted() {
        let s = DenseMatrix::from_diag(&[1.0, 4.0]);
        let e = sym_eig(&s, DEFAULT_EIG_TOL).unwrap();
        assert_eq!(e.eigenvalues, vec![4.0, 1.0]);
        assert_eq!(e.eigenvectors.column(0), vec![0.0, 1.0]);
        assert_eq!(e.eigenvectors.column(1), vec![1.0, 0.0]);
    }

    #[test]
    fn two_by_two_hand_solved() {
        // characteristic polynomial (2 - l)^2 - 1 = 0 gives l = 3, 1
        let s = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&s, DEFAULT_EIG_TOL).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.eigenvectors.column(0);
        let v1 = e.eigenvectors.column(1);
        // eigenvectors are defined up to sign
        assert!((v0[0].abs() - h).abs() < 1e-14 && (v0[0] - v0[1]).abs() < 1e-14);
        assert!((v1[0].abs() - h).abs() < 1e-14 && (v1[0] + v1[1]).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eig(&DenseMatrix::zeros(2, 3), DEFAULT_EIG_TOL),
            Err(Error::Dimension { .. })
        ));
        let s = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            sym_eig(&s, DEFAULT_EIG_TOL),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn zero_matrix() {
        let e = sym_eig(&DenseMatrix::zeros(3, 3), DEFAULT_EIG_TOL).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0; 3]);
    }

    #[test]
    fn trace_preserved_on_many_seeded_matrices() {
        for seed in 0..200u64 {
            let n = 1 + (seed as usize * 7) % 64;
            let s = random_symmetric(n, seed);
            let e = sym_eig(&s, DEFAULT_EIG_TOL).unwrap();
            let tr = s.trace();
            let sum: f64 = e.eigenvalues.iter().sum();
            assert!(
                (sum - tr).abs() <= 1e-9 * tr.abs().max(1e-300) || (sum - tr).abs() <= 1e-12 * s.frobenius_norm(),
                "seed {seed}: {sum} vs {tr}"
            );
            if seed % 20 == 0 {
                check_invariants(&s, &e);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn decomposition_invariants_hold(n in 1usize..24, seed in any::<u64>()) {
            let s = random_symmetric(n, seed);
            let e = sym_eig(&s, DEFAULT_EIG_TOL).unwrap();
            check_invariants(&s, &e);
            let rec = e.reconstruct();
            prop_assert!(rec.sub(&s).unwrap().frobenius_norm() <= 1e-12 * s.frobenius_norm().max(1.0));
        }
    }
}
