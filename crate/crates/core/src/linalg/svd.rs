use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

const MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `M = U diag(s) V^T`.
///
/// For an `m x n` input with `p = min(m, n)`: `u` is `m x p`, `v` is `n x p`,
/// singular values are non-negative and sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = self
            .u
            .scale_columns(&self.singular_values)
            .expect("u has one column per singular value");
        us.matmul_transposed(&self.v)
            .expect("u and v share the rank dimension")
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("svd input has non-finite entries".into()));
    }
    if m.n_rows() < m.n_cols() {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let (rows, cols) = m.shape();
    // Work on M^T so that the columns being orthogonalized are contiguous rows.
    let mut w = m.transpose().into_vec();
    let mut vt = DenseMatrix::identity(cols).into_vec();

    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let wp = &w[p * rows..(p + 1) * rows];
                    let wq = &w[q * rows..(q + 1) * rows];
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (x, y) in wp.iter().zip(wq) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, rows, p, q, c, s);
                rotate_rows(&mut vt, cols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            op: "svd",
            sweeps: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..cols)
        .map(|j| w[j * rows..(j + 1) * rows].iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let singular_values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();

    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let negligible = s_max * f64::EPSILON * rows as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let sv = norms[j];
        if sv > negligible && sv > 0.0 {
            u_cols.push(w[j * rows..(j + 1) * rows].iter().map(|x| x / sv).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            missing.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &missing, rows);

    let u = DenseMatrix::from_fn(rows, cols, |i, j| u_cols[j][i]);
    let v = DenseMatrix::from_fn(cols, cols, |i, j| vt[order[j] * cols + i]);
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

fn rotate_rows(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * len);
    let rp = &mut head[p * len..(p + 1) * len];
    let rq = &mut tail[..len];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the columns listed in `missing` with unit vectors orthogonal to all
/// other columns (Gram-Schmidt against the standard basis).
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize], dim: usize) {
    let mut candidate = 0usize;
    for &slot in missing {
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, other) in cols.iter().enumerate() {
                    if j == slot {
                        continue;
                    }
                    let proj: f64 = other.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[slot] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, DEFAULT_EIG_TOL};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check(m: &DenseMatrix, s: &Svd) {
        let p = m.n_rows().min(m.n_cols());
        let eye = DenseMatrix::identity(p);
        let uu = s.u.transposed_matmul(&s.u).unwrap();
        let vv = s.v.transposed_matmul(&s.v).unwrap();
        assert!(uu.sub(&eye).unwrap().frobenius_norm() <= 1e-9);
        assert!(vv.sub(&eye).unwrap().frobenius_norm() <= 1e-9);
        let rec = s.reconstruct();
        assert!(rec.sub(m).unwrap().frobenius_norm() <= 1e-8 * m.frobenius_norm().max(1e-300));
        assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let s = svd(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(s.singular_values, vec![1.0; 4]);
    }

    #[test]
    fn sign_is_absorbed() {
        let m = DenseMatrix::from_diag(&[3.0, -2.0]);
        let s = svd(&m).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0]);
        check(&m, &s);
    }

    #[test]
    fn matches_eigenvalues_of_gram() {
        let m = random(4, 4, 11);
        let s = svd(&m).unwrap();
        let gram = m.transposed_matmul(&m).unwrap();
        let e = sym_eig(&gram, DEFAULT_EIG_TOL).unwrap();
        for (sv, ev) in s.singular_values.iter().zip(&e.eigenvalues) {
            assert!((sv - ev.max(0.0).sqrt()).abs() < 1e-12, "{sv} vs {ev}");
        }
    }

    #[test]
    fn rank_deficient_gets_complete_basis() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let s = svd(&m).unwrap();
        check(&m, &s);
        assert!(s.singular_values[1].abs() < 1e-12);
        let z = svd(&DenseMatrix::zeros(3, 2)).unwrap();
        check(&DenseMatrix::zeros(3, 2), &z);
    }

    #[test]
    fn wide_and_tall_inputs() {
        for (r, c, seed) in [(3, 7, 1u64), (9, 2, 2), (1, 5, 3), (5, 1, 4)] {
            let m = random(r, c, seed);
            check(&m, &svd(&m).unwrap());
        }
    }

    #[test]
    fn reconstructs_up_to_64() {
        for (n, seed) in [(16usize, 5u64), (33, 6), (64, 7)] {
            let m = random(n, n, seed);
            check(&m, &svd(&m).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn reconstruction_invariant(r in 1usize..20, c in 1usize..20, seed in any::<u64>()) {
            let m = random(r, c, seed);
            check(&m, &svd(&m).unwrap());
        }
    }
}
