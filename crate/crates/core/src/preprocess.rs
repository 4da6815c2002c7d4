//! Inner-product preserving preprocessors `x -> A x`, `w -> A^{-T} w` and the
//! variance objective `Phi(A) = E |Ax|^2 |A^{-T} w|^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{factor_covariance, inverse_transpose_factor, svd, DataMatrix, DenseMatrix};
use crate::moments::SecondMoment;
use crate::numeric::{mix_seed, norm_sq, CompensatedSum};

/// Relative threshold below which a diagonal second moment counts as zero.
pub const DEFAULT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Preprocessor {
    Identity,
    /// `A = diag(scale)`; `A^{-T} = diag(1/scale)`.
    Diagonal { scale: Vec<f64> },
    Full { a: DenseMatrix, a_inv_t: DenseMatrix },
}

impl Preprocessor {
    pub fn dim(&self) -> Option<usize> {
        match self {
            Preprocessor::Identity => None,
            Preprocessor::Diagonal { scale } => Some(scale.len()),
            Preprocessor::Full { a, .. } => Some(a.n_rows()),
        }
    }

    fn check_dim(&self, d: usize, op: &'static str) -> Result<()> {
        match self.dim() {
            Some(p) if p != d => Err(Error::dim(op, format!("preprocessor is {p}-dimensional, input has {d}"))),
            _ => Ok(()),
        }
    }

    /// Multiplies every row by `A`.
    pub fn apply_x(&self, m: &DataMatrix) -> Result<DataMatrix> {
        self.check_dim(m.n_cols(), "apply_x")?;
        match self {
            Preprocessor::Identity => Ok(m.clone()),
            Preprocessor::Diagonal { scale } => m.scale_columns(scale),
            Preprocessor::Full { a, .. } => Ok(DataMatrix::Dense(right_multiply_transposed(m, a)?)),
        }
    }

    /// Multiplies every row by `A^{-T}`.
    pub fn apply_w(&self, m: &DataMatrix) -> Result<DataMatrix> {
        self.check_dim(m.n_cols(), "apply_w")?;
        match self {
            Preprocessor::Identity => Ok(m.clone()),
            Preprocessor::Diagonal { scale } => {
                let inv: Vec<f64> = scale.iter().map(|s| 1.0 / s).collect();
                m.scale_columns(&inv)
            }
            Preprocessor::Full { a_inv_t, .. } => Ok(DataMatrix::Dense(right_multiply_transposed(m, a_inv_t)?)),
        }
    }

    pub fn apply_x_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len(), "apply_x")?;
        match self {
            Preprocessor::Identity => Ok(x.to_vec()),
            Preprocessor::Diagonal { scale } => Ok(x.iter().zip(scale).map(|(v, s)| v * s).collect()),
            Preprocessor::Full { a, .. } => a.mul_vec(x),
        }
    }

    pub fn apply_w_vec(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w.len(), "apply_w")?;
        match self {
            Preprocessor::Identity => Ok(w.to_vec()),
            Preprocessor::Diagonal { scale } => Ok(w.iter().zip(scale).map(|(v, s)| v / s).collect()),
            Preprocessor::Full { a_inv_t, .. } => a_inv_t.mul_vec(w),
        }
    }
}

/// `m * t^T` for a dense square `t`.
fn right_multiply_transposed(m: &DataMatrix, t: &DenseMatrix) -> Result<DenseMatrix> {
    match m {
        DataMatrix::Dense(d) => d.matmul_transposed(t),
        DataMatrix::Sparse(s) => s.mul_dense(&t.transpose()),
    }
}

fn check_diagonal(diag: &[f64], name: &str) -> Result<f64> {
    let mut max = 0.0f64;
    for &v in diag {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!("{name} has invalid entry {v}")));
        }
        max = max.max(v);
    }
    Ok(max)
}

/// Per-coordinate `(Sigma_W,ii / Sigma_X,ii)^{1/4}`, i.e. `d_X(i)^{-1/2} d_W(i)^{1/2}`
/// with `d` the square roots of the diagonals. Coordinates where either side
/// is below `eps * max` of its diagonal keep scale 1.
pub fn build_quick(diag_x: &[f64], diag_w: &[f64], eps: f64) -> Result<Preprocessor> {
    if diag_x.len() != diag_w.len() {
        return Err(Error::dim("build_quick", format!("{} vs {}", diag_x.len(), diag_w.len())));
    }
    let max_x = check_diagonal(diag_x, "diag_x")?;
    let max_w = check_diagonal(diag_w, "diag_w")?;
    let scale = diag_x
        .iter()
        .zip(diag_w)
        .map(|(&sx, &sw)| {
            if sx <= eps * max_x || sw <= eps * max_w {
                1.0
            } else {
                (sw / sx).sqrt().sqrt()
            }
        })
        .collect();
    Ok(Preprocessor::Diagonal { scale })
}

/// Per-coordinate `Sigma_X,ii^lambda`, with the same zero guard as [`build_quick`].
pub fn lambda_scales(diag_x: &[f64], lambda: f64, eps: f64) -> Result<Vec<f64>> {
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    let max_x = check_diagonal(diag_x, "diag_x")?;
    Ok(diag_x
        .iter()
        .map(|&sx| {
            if lambda == 0.0 || sx <= eps * max_x {
                1.0
            } else {
                sx.powf(lambda)
            }
        })
        .collect())
}

pub fn build_lambda(diag_x: &[f64], lambda: f64, eps: f64) -> Result<Preprocessor> {
    Ok(Preprocessor::Diagonal {
        scale: lambda_scales(diag_x, lambda, eps)?,
    })
}

/// The optimal preprocessor together with the singular values of
/// `Q_X Q_W^T`; their sum squared is the attained `Phi`.
#[derive(Debug, Clone)]
pub struct OptimalBuild {
    pub preprocessor: Preprocessor,
    pub singular_values: Vec<f64>,
    /// Number of eigenvalues (over both sides) raised to the floor.
    pub clamped: usize,
}

impl OptimalBuild {
    pub fn nuclear_norm_sq(&self) -> f64 {
        let s: f64 = self.singular_values.iter().copied().collect::<CompensatedSum>().value();
        s * s
    }
}

fn full_of<'a>(m: &'a SecondMoment, name: &str) -> Result<&'a DenseMatrix> {
    m.full()
        .ok_or_else(|| Error::Configuration(format!("{name} needs the full second-moment matrix")))
}

/// With `Sigma = Q^T Q` on both sides and `Q_X Q_W^T = U D V^T`:
/// `A = D^{1/2} U^T Q_X^{-T}`, `A^{-T} = D^{1/2} V^T Q_W^{-T}`.
pub fn build_optimal_detailed(sigma_x: &SecondMoment, sigma_w: &SecondMoment, floor: f64) -> Result<OptimalBuild> {
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(Error::InvalidArgument(format!("eigenvalue floor must be finite and >= 0, got {floor}")));
    }
    let sx = full_of(sigma_x, "optimal preprocessor")?;
    let sw = full_of(sigma_w, "optimal preprocessor")?;
    if sx.shape() != sw.shape() {
        return Err(Error::dim("build_optimal", format!("{:?} vs {:?}", sx.shape(), sw.shape())));
    }
    let fx = factor_covariance(sx, floor)?;
    let fw = factor_covariance(sw, floor)?;
    let qx_inv_t = inverse_transpose_factor(&fx, floor)?;
    let qw_inv_t = inverse_transpose_factor(&fw, floor)?;
    let dec = svd(&fx.q.matmul_transposed(&fw.q)?)?;
    let root: Vec<f64> = dec.singular_values.iter().map(|s| s.sqrt()).collect();
    // D^{1/2} U^T scales the rows of U^T.
    let a = dec.u.transpose().matmul(&qx_inv_t)?;
    let a_inv_t = dec.v.transpose().matmul(&qw_inv_t)?;
    let a = scale_rows(a, &root);
    let a_inv_t = scale_rows(a_inv_t, &root);
    let clamped = fx.clamped + fw.clamped;
    Ok(OptimalBuild {
        preprocessor: Preprocessor::Full { a, a_inv_t },
        singular_values: dec.singular_values,
        clamped,
    })
}

fn scale_rows(mut m: DenseMatrix, s: &[f64]) -> DenseMatrix {
    for (i, &f) in s.iter().enumerate() {
        m.row_mut(i).iter_mut().for_each(|v| *v *= f);
    }
    m
}

pub fn build_optimal(sigma_x: &SecondMoment, sigma_w: &SecondMoment, floor: f64) -> Result<Preprocessor> {
    Ok(build_optimal_detailed(sigma_x, sigma_w, floor)?.preprocessor)
}

/// `Tr(A Sigma_X A^T) * Tr(A^{-T} Sigma_W A^{-1})`.
pub fn phi_exact(p: &Preprocessor, sigma_x: &SecondMoment, sigma_w: &SecondMoment) -> Result<f64> {
    if sigma_x.dim() != sigma_w.dim() {
        return Err(Error::dim("phi_exact", format!("{} vs {}", sigma_x.dim(), sigma_w.dim())));
    }
    p.check_dim(sigma_x.dim(), "phi_exact")?;
    match p {
        Preprocessor::Identity => Ok(sigma_x.trace() * sigma_w.trace()),
        Preprocessor::Diagonal { scale } => {
            let tx: CompensatedSum = scale.iter().zip(sigma_x.diag()).map(|(s, v)| s * s * v).collect();
            let tw: CompensatedSum = scale.iter().zip(sigma_w.diag()).map(|(s, v)| v / (s * s)).collect();
            Ok(tx.value() * tw.value())
        }
        Preprocessor::Full { a, a_inv_t } => {
            let sx = full_of(sigma_x, "phi_exact for a full preprocessor")?;
            let sw = full_of(sigma_w, "phi_exact for a full preprocessor")?;
            Ok(congruence_trace(a, sx)? * congruence_trace(a_inv_t, sw)?)
        }
    }
}

/// `Tr(B S B^T)`.
fn congruence_trace(b: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    let bs = b.matmul(s)?;
    Ok(bs
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .collect::<CompensatedSum>()
        .value())
}

/// Source of i.i.d. vectors for the Monte Carlo estimate of `Phi`.
#[derive(Debug, Clone)]
pub enum VectorSampler {
    /// `x = Q^T z` with `z ~ N(0, I)`, so `E[x x^T] = Q^T Q`.
    Gaussian { q: DenseMatrix },
    /// Always the same vector.
    Fixed(Vec<f64>),
    /// Uniformly resampled rows of a data matrix (the empirical distribution).
    Rows(DenseMatrix),
}

impl VectorSampler {
    /// Gaussian sampler whose second moment is `sigma` (after eigenvalue clamping).
    pub fn gaussian(sigma: &DenseMatrix, floor: f64) -> Result<Self> {
        Ok(VectorSampler::Gaussian {
            q: factor_covariance(sigma, floor)?.q,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorSampler::Gaussian { q } => q.n_cols(),
            VectorSampler::Fixed(v) => v.len(),
            VectorSampler::Rows(m) => m.n_cols(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
        match self {
            VectorSampler::Gaussian { q } => {
                let d = q.n_rows();
                scratch.clear();
                scratch.extend((0..d).map(|_| -> f64 { StandardNormal.sample(rng) }));
                out.clear();
                out.resize(q.n_cols(), 0.0);
                for (zi, row) in scratch.iter().zip(q.rows()) {
                    for (o, &qv) in out.iter_mut().zip(row) {
                        *o += zi * qv;
                    }
                }
            }
            VectorSampler::Fixed(v) => {
                out.clear();
                out.extend_from_slice(v);
            }
            VectorSampler::Rows(m) => {
                let i = Uniform::new(0, m.n_rows()).expect("non-empty sampler").sample(rng);
                out.clear();
                out.extend_from_slice(m.row(i));
            }
        }
    }
}

const MC_CHUNK: usize = 4096;

/// Sample mean of `|Ax|^2 |A^{-T} w|^2` over independent pairs. Trials are cut
/// into fixed chunks with seeds derived from `seed`, so the result does not
/// depend on the thread count.
pub fn phi_monte_carlo(
    p: &Preprocessor,
    sampler_x: &VectorSampler,
    sampler_w: &VectorSampler,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 100 {
        return Err(Error::InvalidArgument("phi_monte_carlo needs at least 100 trials".into()));
    }
    let d = sampler_x.dim();
    if sampler_w.dim() != d {
        return Err(Error::dim("phi_monte_carlo", format!("samplers have dims {d} and {}", sampler_w.dim())));
    }
    if let VectorSampler::Rows(m) = sampler_x {
        if m.n_rows() == 0 {
            return Err(Error::EmptyData("x sampler has no rows".into()));
        }
    }
    if let VectorSampler::Rows(m) = sampler_w {
        if m.n_rows() == 0 {
            return Err(Error::EmptyData("w sampler has no rows".into()));
        }
    }
    p.check_dim(d, "phi_monte_carlo")?;
    let chunks = trials.div_ceil(MC_CHUNK);
    let partials: Vec<CompensatedSum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, c as u64));
            let (mut scratch, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
            let mut acc = CompensatedSum::new();
            for _ in 0..count {
                sampler_x.draw(&mut rng, &mut scratch, &mut x);
                sampler_w.draw(&mut rng, &mut scratch, &mut w);
                let ax = p.apply_x_vec(&x).expect("dimension checked");
                let aw = p.apply_w_vec(&w).expect("dimension checked");
                acc.add(norm_sq(&ax) * norm_sq(&aw));
            }
            acc
        })
        .collect();
    let mut total = CompensatedSum::new();
    for part in &partials {
        total.merge(part);
    }
    Ok(total.value() / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub phi_identity: f64,
    pub phi_quick: f64,
    pub phi_optimal: f64,
    /// Squared nuclear norm of `Q_X Q_W^T`.
    pub optimal_lower_bound: f64,
}

/// Relative slack allowed in the `optimal <= quick <= identity` ordering.
pub const PHI_ORDER_SLACK: f64 = 1e-9;

pub fn phi_report(sigma_x: &SecondMoment, sigma_w: &SecondMoment, floor: f64) -> Result<PhiReport> {
    let quick = build_quick(sigma_x.diag(), sigma_w.diag(), DEFAULT_EPS)?;
    let optimal = build_optimal_detailed(sigma_x, sigma_w, floor)?;
    let report = PhiReport {
        phi_identity: phi_exact(&Preprocessor::Identity, sigma_x, sigma_w)?,
        phi_quick: phi_exact(&quick, sigma_x, sigma_w)?,
        phi_optimal: phi_exact(&optimal.preprocessor, sigma_x, sigma_w)?,
        optimal_lower_bound: optimal.nuclear_norm_sq(),
    };
    let leq = |a: f64, b: f64| a <= b + PHI_ORDER_SLACK * b.abs().max(a.abs());
    if !leq(report.phi_optimal, report.phi_quick) || !leq(report.phi_quick, report.phi_identity) {
        return Err(Error::PhiOrdering(format!(
            "identity {:e}, quick {:e}, optimal {:e}",
            report.phi_identity, report.phi_quick, report.phi_optimal
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_FLOOR;
    use proptest::prelude::*;
    use rand::Rng;

    fn full(m: DenseMatrix) -> SecondMoment {
        SecondMoment::from_full(m).unwrap()
    }

    fn random_psd(d: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(d + 2, d, |_, j| rng.random_range(-1.0..1.0) * (1.0 + j as f64));
        g.transposed_matmul(&g).unwrap().symmetrized()
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn quick_examples() {
        let Preprocessor::Diagonal { scale } = build_quick(&[2.0, 3.0], &[2.0, 3.0], DEFAULT_EPS).unwrap() else {
            panic!()
        };
        assert_eq!(scale, vec![1.0, 1.0]);
        let Preprocessor::Diagonal { scale } = build_quick(&[4.0, 1.0], &[1.0, 1.0], DEFAULT_EPS).unwrap() else {
            panic!()
        };
        assert!((scale[0] - 0.5f64.sqrt()).abs() < 1e-15 && scale[1] == 1.0);
        let Preprocessor::Diagonal { scale } = build_quick(&[1.0, 0.0], &[1.0, 1.0], 1e-9).unwrap() else {
            panic!()
        };
        assert_eq!(scale, vec![1.0, 1.0]);
        assert!(build_quick(&[1.0], &[1.0, 2.0], DEFAULT_EPS).is_err());
        assert!(build_quick(&[-1.0], &[1.0], DEFAULT_EPS).is_err());
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_scales(&[4.0, 1.0], 0.0, DEFAULT_EPS).unwrap(), vec![1.0, 1.0]);
        let q = lambda_scales(&[4.0, 1.0], -0.25, DEFAULT_EPS).unwrap();
        let Preprocessor::Diagonal { scale } = build_quick(&[4.0, 1.0], &[1.0, 1.0], DEFAULT_EPS).unwrap() else {
            panic!()
        };
        assert!(q.iter().zip(&scale).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(lambda_scales(&[4.0, 1.0], -0.5, DEFAULT_EPS).unwrap(), vec![0.5, 1.0]);
        assert_eq!(lambda_scales(&[4.0, 0.0], -0.5, DEFAULT_EPS).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn apply_examples() {
        let p = Preprocessor::Identity;
        let m: DataMatrix = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap().into();
        assert_eq!(p.apply_x(&m).unwrap(), m);
        let s = 0.5f64.sqrt();
        let p = Preprocessor::Diagonal { scale: vec![s, 1.0] };
        let x = p.apply_x_vec(&[1.0, 1.0]).unwrap();
        let w = p.apply_w_vec(&[1.0, 1.0]).unwrap();
        assert_eq!(x, vec![s, 1.0]);
        assert!((w[0] - 2f64.sqrt()).abs() < 1e-15 && w[1] == 1.0);
        assert!((crate::numeric::dot(&x, &w) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn phi_on_diag_four_one() {
        let sx = full(DenseMatrix::from_diag(&[4.0, 1.0]));
        let sw = full(DenseMatrix::identity(2));
        assert_eq!(phi_exact(&Preprocessor::Identity, &sx, &sw).unwrap(), 10.0);
        let quick = build_quick(sx.diag(), sw.diag(), DEFAULT_EPS).unwrap();
        assert!(rel(phi_exact(&quick, &sx, &sw).unwrap(), 9.0) < 1e-15);
        let opt = build_optimal(&sx, &sw, DEFAULT_FLOOR).unwrap();
        assert!(rel(phi_exact(&opt, &sx, &sw).unwrap(), 9.0) < 1e-12);
        let r = phi_report(&sx, &sw, DEFAULT_FLOOR).unwrap();
        assert_eq!(r.phi_identity, 10.0);
        assert!(rel(r.optimal_lower_bound, 9.0) < 1e-12);
        // The optimal map here is diagonal up to an orthogonal factor: A^T A = diag(1/2, 1).
        let Preprocessor::Full { a, .. } = opt else { panic!() };
        let ata = a.transposed_matmul(&a).unwrap();
        assert!(ata.sub(&DenseMatrix::from_diag(&[0.5, 1.0])).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn isotropic_optimal_is_orthogonal() {
        let s = full(DenseMatrix::identity(3));
        let opt = build_optimal(&s, &s, DEFAULT_FLOOR).unwrap();
        let Preprocessor::Full { a, .. } = &opt else { panic!() };
        let ata = a.transposed_matmul(a).unwrap();
        assert!(ata.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-12);
        let r = phi_report(&s, &s, DEFAULT_FLOOR).unwrap();
        for v in [r.phi_identity, r.phi_quick, r.phi_optimal, r.optimal_lower_bound] {
            assert!(rel(v, 9.0) < 1e-12);
        }
    }

    #[test]
    fn optimal_needs_full_moments() {
        let s = SecondMoment::from_diag(vec![1.0, 2.0]).unwrap();
        assert!(matches!(build_optimal(&s, &s, DEFAULT_FLOOR), Err(Error::Configuration(_))));
    }

    #[test]
    fn full_preprocessor_preserves_inner_products() {
        let sx = full(DenseMatrix::from_diag(&[4.0, 1.0]));
        let sw = full(DenseMatrix::identity(2));
        let p = build_optimal(&sx, &sw, DEFAULT_FLOOR).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = random_vec(&mut rng, 2);
            let w = random_vec(&mut rng, 2);
            let lhs = crate::numeric::dot(&p.apply_x_vec(&x).unwrap(), &p.apply_w_vec(&w).unwrap());
            assert!((lhs - crate::numeric::dot(&x, &w)).abs() <= 1e-10);
        }
    }

    #[test]
    fn cca_balance_on_non_commuting_pair() {
        let sx = full(random_psd(5, 10));
        let sw = full(random_psd(5, 11));
        let Preprocessor::Full { a, a_inv_t } = build_optimal(&sx, &sw, DEFAULT_FLOOR).unwrap() else { panic!() };
        let lhs = a.matmul(sx.full().unwrap()).unwrap().matmul_transposed(&a).unwrap();
        let rhs = a_inv_t.matmul(sw.full().unwrap()).unwrap().matmul_transposed(&a_inv_t).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-6 * lhs.frobenius_norm());
        let r = phi_report(&sx, &sw, DEFAULT_FLOOR).unwrap();
        assert!(rel(r.phi_optimal, r.optimal_lower_bound) <= 1e-6);
    }

    #[test]
    fn commuting_case_matches_sorted_eigenvalue_product() {
        let q = crate::linalg::svd(&random_psd(4, 3)).unwrap().u;
        let ex = [9.0, 4.0, 1.0, 0.25];
        let ew = [5.0, 2.0, 0.5, 0.1];
        let build = |e: &[f64]| full(q.scale_columns(e).unwrap().matmul_transposed(&q).unwrap().symmetrized());
        let (sx, sw) = (build(&ex), build(&ew));
        let expected: f64 = ex.iter().zip(&ew).map(|(a, b)| (a * b).sqrt()).sum::<f64>().powi(2);
        let r = phi_report(&sx, &sw, DEFAULT_FLOOR).unwrap();
        assert!(rel(r.phi_optimal, expected) <= 1e-8, "{} vs {expected}", r.phi_optimal);
    }

    #[test]
    fn fixed_sampler_phi() {
        let p = Preprocessor::Identity;
        let x = VectorSampler::Fixed(vec![1.0, 0.0]);
        let w = VectorSampler::Fixed(vec![0.0, 1.0]);
        assert_eq!(phi_monte_carlo(&p, &x, &w, 100, 0).unwrap(), 1.0);
        assert!(phi_monte_carlo(&p, &x, &w, 99, 0).is_err());
    }

    #[test]
    fn gaussian_sampler_phi_matches_exact() {
        let sx = full(DenseMatrix::from_diag(&[4.0, 1.0]));
        let sw = full(DenseMatrix::identity(2));
        let gx = VectorSampler::gaussian(sx.full().unwrap(), DEFAULT_FLOOR).unwrap();
        let gw = VectorSampler::gaussian(sw.full().unwrap(), DEFAULT_FLOOR).unwrap();
        let quick = build_quick(sx.diag(), sw.diag(), DEFAULT_EPS).unwrap();
        let n = 1_000_000;
        assert!(rel(phi_monte_carlo(&Preprocessor::Identity, &gx, &gw, n, 5).unwrap(), 10.0) < 0.03);
        assert!(rel(phi_monte_carlo(&quick, &gx, &gw, n, 6).unwrap(), 9.0) < 0.03);
    }

    #[test]
    fn row_sampler_uses_empirical_distribution() {
        let x = DenseMatrix::from_rows(&[[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let w = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        // E|x|^2 = 2.5, E|w|^2 = 1.
        let v = phi_monte_carlo(&Preprocessor::Identity, &VectorSampler::Rows(x), &VectorSampler::Rows(w), 200_000, 3)
            .unwrap();
        assert!(rel(v, 2.5) < 0.02, "{v}");
    }

    #[test]
    fn perturbing_quick_scales_never_helps() {
        let dx = [4.0, 1.0, 0.3, 7.0];
        let dw = [1.0, 2.0, 5.0, 0.1];
        let sx = SecondMoment::from_diag(dx.to_vec()).unwrap();
        let sw = SecondMoment::from_diag(dw.to_vec()).unwrap();
        let quick = phi_exact(&build_quick(&dx, &dw, DEFAULT_EPS).unwrap(), &sx, &sw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let scale: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..3.0)).collect();
            let v = phi_exact(&Preprocessor::Diagonal { scale }, &sx, &sw).unwrap();
            assert!(v >= quick * (1.0 - 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ordering_and_preservation(d in 1usize..8, seed in any::<u64>()) {
            let sx = full(random_psd(d, seed));
            let sw = full(random_psd(d, seed ^ 0xABCD));
            let r = phi_report(&sx, &sw, DEFAULT_FLOOR).unwrap();
            prop_assert!(rel(r.phi_optimal, r.optimal_lower_bound) <= 1e-6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let variants = [
                Preprocessor::Identity,
                build_quick(sx.diag(), sw.diag(), DEFAULT_EPS).unwrap(),
                build_lambda(sx.diag(), -0.5, DEFAULT_EPS).unwrap(),
                build_optimal(&sx, &sw, DEFAULT_FLOOR).unwrap(),
            ];
            for p in &variants {
                let x = random_vec(&mut rng, d);
                let w = random_vec(&mut rng, d);
                let lhs = crate::numeric::dot(&p.apply_x_vec(&x).unwrap(), &p.apply_w_vec(&w).unwrap());
                let tol = 1e-8 * norm_sq(&x).sqrt() * norm_sq(&w).sqrt();
                prop_assert!((lhs - crate::numeric::dot(&x, &w)).abs() <= tol);
            }
        }
    }
}
