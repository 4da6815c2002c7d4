//! Uncentered second moments `E[x x^T]` and their diagonals.
//!
//! Nothing here subtracts a mean. The variance bounds the projections rely on
//! are stated in terms of raw second moments, so centering would change the
//! quantity being estimated.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DataMatrix, DenseMatrix};
use crate::numeric::CompensatedSum;

/// Second-moment statistics of one vector family.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoment {
    dim: usize,
    full: Option<DenseMatrix>,
    diag: Vec<f64>,
}

impl SecondMoment {
    /// Builds from a full symmetric matrix; the diagonal is read off it.
    pub fn from_full(full: DenseMatrix) -> Result<Self> {
        if !full.is_square() {
            return Err(Error::dim("SecondMoment::from_full", format!("shape {:?}", full.shape())));
        }
        let diag = full.diagonal();
        if let Some(v) = diag.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidArgument(format!("negative second-moment diagonal {v}")));
        }
        Ok(Self {
            dim: diag.len(),
            full: Some(full),
            diag,
        })
    }

    pub fn from_diag(diag: Vec<f64>) -> Result<Self> {
        if let Some(v) = diag.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid second-moment diagonal {v}")));
        }
        Ok(Self {
            dim: diag.len(),
            full: None,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn full(&self) -> Option<&DenseMatrix> {
        self.full.as_ref()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().copied().collect::<CompensatedSum>().value()
    }

    /// Drops the full matrix, keeping the diagonal.
    pub fn diag_only(&self) -> SecondMoment {
        SecondMoment {
            dim: self.dim,
            full: None,
            diag: self.diag.clone(),
        }
    }
}

/// Row-by-row accumulator. Partial accumulators over disjoint row sets can be
/// merged; the result is weighted by sample count.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    dim: usize,
    count: u64,
    diag: Vec<CompensatedSum>,
    gram: Option<Vec<f64>>,
}

impl MomentAccumulator {
    pub fn new(dim: usize, with_full: bool) -> Self {
        Self {
            dim,
            count: 0,
            diag: vec![CompensatedSum::new(); dim],
            gram: with_full.then(|| vec![0.0; dim * dim]),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::dim(
                "moments",
                format!("row {} has length {}, expected {}", self.count, row.len(), self.dim),
            ));
        }
        for (acc, &v) in self.diag.iter_mut().zip(row) {
            acc.add(v * v);
        }
        if let Some(g) = self.gram.as_mut() {
            let d = self.dim;
            for (i, &xi) in row.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (gij, &xj) in g[i * d..(i + 1) * d].iter_mut().zip(row) {
                    *gij += xi * xj;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Pushes a sparse row given as sorted `(index, value)` pairs.
    pub fn push_sparse(&mut self, cols: &[usize], vals: &[f64]) -> Result<()> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.dim) {
            return Err(Error::dim("moments", format!("column {c} out of range {}", self.dim)));
        }
        for (&c, &v) in cols.iter().zip(vals) {
            self.diag[c].add(v * v);
        }
        if let Some(g) = self.gram.as_mut() {
            let d = self.dim;
            for (&ci, &vi) in cols.iter().zip(vals) {
                for (&cj, &vj) in cols.iter().zip(vals) {
                    g[ci * d + cj] += vi * vj;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.dim != self.dim || other.gram.is_some() != self.gram.is_some() {
            return Err(Error::dim("MomentAccumulator::merge", "incompatible accumulators"));
        }
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (self.gram.as_mut(), other.gram.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(self) -> Result<SecondMoment> {
        if self.count == 0 {
            return Err(Error::EmptyData("no rows to estimate second moments from".into()));
        }
        let n = self.count as f64;
        let diag: Vec<f64> = self.diag.iter().map(|s| s.value() / n).collect();
        let full = self.gram.map(|g| {
            let mut m = DenseMatrix::from_vec_unchecked(self.dim, self.dim, g);
            m = m.scale(1.0 / n).symmetrized();
            for (i, &v) in diag.iter().enumerate() {
                m[(i, i)] = v;
            }
            m
        });
        Ok(SecondMoment {
            dim: self.dim,
            full,
            diag,
        })
    }
}

/// `(1/n) X^T X` together with its diagonal.
pub fn estimate_full(data: &DataMatrix) -> Result<SecondMoment> {
    match data {
        DataMatrix::Dense(m) => estimate_full_dense(m),
        DataMatrix::Sparse(m) => estimate_full_sparse(m),
    }
}

fn estimate_full_dense(m: &DenseMatrix) -> Result<SecondMoment> {
    if m.n_rows() == 0 {
        return Err(Error::EmptyData("no rows to estimate second moments from".into()));
    }
    let n = m.n_rows() as f64;
    let diag = estimate_diag_streaming(m.rows())?.diag;
    let mut full = m.transposed_matmul(m)?.scale(1.0 / n).symmetrized();
    for (i, &v) in diag.iter().enumerate() {
        full[(i, i)] = v;
    }
    Ok(SecondMoment {
        dim: m.n_cols(),
        full: Some(full),
        diag,
    })
}

fn estimate_full_sparse(m: &CsrMatrix) -> Result<SecondMoment> {
    let mut acc = MomentAccumulator::new(m.n_cols(), true);
    for i in 0..m.n_rows() {
        let (c, v) = m.row(i);
        acc.push_sparse(c, v)?;
    }
    acc.finish()
}

/// Diagonal of the second moment in one pass with `O(d)` memory.
pub fn estimate_diag_streaming<I, R>(rows: I) -> Result<SecondMoment>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut iter = rows.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::EmptyData("no rows to estimate second moments from".into()))?;
    let mut acc = MomentAccumulator::new(first.as_ref().len(), false);
    acc.push(first.as_ref())?;
    for row in iter {
        acc.push(row.as_ref())?;
    }
    acc.finish()
}

/// Diagonal-only estimate for either storage kind.
pub fn estimate_diag(data: &DataMatrix) -> Result<SecondMoment> {
    match data {
        DataMatrix::Dense(m) => estimate_diag_streaming(m.rows()),
        DataMatrix::Sparse(m) => {
            let mut acc = MomentAccumulator::new(m.n_cols(), false);
            for i in 0..m.n_rows() {
                let (c, v) = m.row(i);
                acc.push_sparse(c, v)?;
            }
            acc.finish()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, DEFAULT_EIG_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, d, |_, j| (j + 1) as f64 * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn single_row() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let s = estimate_full(&m.into()).unwrap();
        assert_eq!(s.full().unwrap(), &DenseMatrix::from_diag(&[1.0, 0.0]));
    }

    #[test]
    fn cross_terms_cancel() {
        let m = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]]).unwrap();
        let s = estimate_full(&m.into()).unwrap();
        assert_eq!(s.full().unwrap(), &DenseMatrix::identity(2));
    }

    #[test]
    fn matches_naive_pair_average() {
        let m = gaussian(100, 5, 3);
        let s = estimate_full(&m.clone().into()).unwrap();
        let full = s.full().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let naive: f64 = (0..100).map(|r| m[(r, i)] * m[(r, j)]).sum::<f64>() / 100.0;
                assert!((full[(i, j)] - naive).abs() <= 1e-12 * naive.abs().max(1.0));
            }
        }
    }

    #[test]
    fn streaming_diag_examples() {
        let s = estimate_diag_streaming([[2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(s.diag(), &[2.0, 2.0]);
        assert!(s.full().is_none());
        let z = estimate_diag_streaming(vec![vec![0.0; 3]; 4]).unwrap();
        assert_eq!(z.diag(), &[0.0; 3]);
    }

    #[test]
    fn ragged_and_empty_inputs() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(estimate_diag_streaming(&rows), Err(Error::Dimension { .. })));
        let none: Vec<Vec<f64>> = vec![];
        assert!(matches!(estimate_diag_streaming(&none), Err(Error::EmptyData(_))));
        assert!(matches!(
            estimate_full(&DenseMatrix::zeros(0, 3).into()),
            Err(Error::EmptyData(_))
        ));
    }

    #[test]
    fn streaming_matches_full_diagonal() {
        for seed in 0..20 {
            let m = gaussian(200, 7, seed);
            let full = estimate_full(&m.clone().into()).unwrap();
            let diag = estimate_diag_streaming(m.rows()).unwrap();
            for (a, b) in full.full().unwrap().diagonal().iter().zip(diag.diag()) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn sparse_matches_dense() {
        let mut m = gaussian(60, 6, 9);
        for (idx, v) in m.as_mut_slice().iter_mut().enumerate() {
            if idx % 3 != 0 {
                *v = 0.0;
            }
        }
        let dense = estimate_full(&m.clone().into()).unwrap();
        let sparse = estimate_full(&CsrMatrix::from_dense(&m).into()).unwrap();
        let diff = dense.full().unwrap().sub(sparse.full().unwrap()).unwrap();
        assert!(diff.max_abs() <= 1e-12);
        let sd = estimate_diag(&CsrMatrix::from_dense(&m).into()).unwrap();
        assert_eq!(sd.diag(), dense.diag());
    }

    #[test]
    fn merged_shards_match_serial() {
        let m = gaussian(301, 4, 17);
        let mut serial = MomentAccumulator::new(4, true);
        for r in m.rows() {
            serial.push(r).unwrap();
        }
        let mut a = MomentAccumulator::new(4, true);
        let mut b = MomentAccumulator::new(4, true);
        for (i, r) in m.rows().enumerate() {
            if i < 120 { a.push(r).unwrap() } else { b.push(r).unwrap() }
        }
        a.merge(&b).unwrap();
        let s = serial.finish().unwrap();
        let p = a.finish().unwrap();
        let diff = s.full().unwrap().sub(p.full().unwrap()).unwrap();
        assert!(diff.max_abs() <= 1e-12 * s.full().unwrap().max_abs());
        for (x, y) in s.diag().iter().zip(p.diag()) {
            assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn estimates_are_psd() {
        for seed in 0..100u64 {
            let n = 3 + (seed as usize % 10);
            let m = gaussian(n, 6, 1000 + seed);
            let s = estimate_full(&m.into()).unwrap();
            let e = sym_eig(s.full().unwrap(), DEFAULT_EIG_TOL).unwrap();
            let lmax = e.eigenvalues[0];
            assert!(*e.eigenvalues.last().unwrap() >= -1e-9 * lmax, "seed {seed}");
        }
    }
}
