//! Synthetic data with controlled second moments: `diag`, `uniform` and
//! `unifskew` row distributions.
//!
//! Every generator draws from its own stream, derived from the user seed with
//! [`mix_seed`] and a per-kind tag. This keeps generator streams distinct from
//! projection streams that use the raw seed, even when the numbers coincide.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::numeric::mix_seed;

const DIAG_TAG: u64 = 0xD1A6;
const UNIFORM_TAG: u64 = 0x0411F;
const ROTATION_TAG: u64 = 0x2074;
const SKEW_DIAG_CHILD: u64 = 1;
const SKEW_UNIFORM_CHILD: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Diagonal covariance with heavy-tailed (Laplace) spread.
    Diag,
    /// Uniform spectrum in a random rotation.
    Uniform,
    /// Average of an independent `Diag` and `Uniform` matrix.
    UnifSkew,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Diag => "diag",
            SyntheticKind::Uniform => "uniform",
            SyntheticKind::UnifSkew => "unifskew",
        }
    }
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" => Ok(SyntheticKind::Diag),
            "uniform" => Ok(SyntheticKind::Uniform),
            "unifskew" => Ok(SyntheticKind::UnifSkew),
            other => Err(Error::InvalidArgument(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

/// How the sampled spectrum values enter the row distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumModel {
    /// Sampled values scale white noise: `x = U diag(s) z`, so the second
    /// moment has eigenvalues `s^2`.
    #[default]
    Scale,
    /// Sampled values are the eigenvalues themselves (Laplace draws in
    /// absolute value).
    Variance,
}

impl std::str::FromStr for SpectrumModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scale" => Ok(SpectrumModel::Scale),
            "variance" => Ok(SpectrumModel::Variance),
            other => Err(Error::InvalidArgument(format!("unknown spectrum model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Laplace scale `b` for the diagonal spectrum.
    pub laplace_scale: f64,
    pub spectrum: SpectrumModel,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, d: usize, n: usize, seed: u64) -> Self {
        Self {
            kind,
            d,
            n,
            seed,
            laplace_scale: 1.0,
            spectrum: SpectrumModel::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::InvalidArgument(format!("need d >= 1 and n >= 1, got d={} n={}", self.d, self.n)));
        }
        if !(self.laplace_scale > 0.0) || !self.laplace_scale.is_finite() {
            return Err(Error::InvalidArgument(format!("laplace scale must be positive, got {}", self.laplace_scale)));
        }
        Ok(())
    }

    fn child(&self, kind: SyntheticKind, stream: u64) -> Self {
        Self {
            kind,
            seed: mix_seed(self.seed, stream),
            ..*self
        }
    }

    /// The two constituent specs of a `UnifSkew` matrix.
    pub fn skew_children(&self) -> (SyntheticSpec, SyntheticSpec) {
        (
            self.child(SyntheticKind::Diag, SKEW_DIAG_CHILD),
            self.child(SyntheticKind::Uniform, SKEW_UNIFORM_CHILD),
        )
    }
}

fn laplace(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let magnitude: f64 = rng.sample(Exp1);
    if rng.random::<bool>() {
        magnitude * scale
    } else {
        -magnitude * scale
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt QR of a Gaussian matrix.
/// The Gram-Schmidt `R` has a positive diagonal by construction, which is the
/// sign convention that makes `Q` Haar.
pub fn random_rotation(d: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, ROTATION_TAG));
    let g = gaussian_matrix(&mut rng, d, d);
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| g.column(j)).collect();
    for j in 0..d {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        // Two passes keep the columns orthogonal to working precision.
        for _ in 0..2 {
            for q in done.iter() {
                let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (x, qv) in v.iter_mut().zip(q) {
                    *x -= proj * qv;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    DenseMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Per-coordinate (diag) or per-eigenvector (uniform) generator values as drawn.
pub fn spectrum(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    match spec.kind {
        SyntheticKind::Diag => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, DIAG_TAG));
            Ok((0..spec.d).map(|_| laplace(&mut rng, spec.laplace_scale)).collect())
        }
        SyntheticKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, UNIFORM_TAG));
            Ok((0..spec.d).map(|_| rng.random::<f64>()).collect())
        }
        SyntheticKind::UnifSkew => Err(Error::InvalidArgument(
            "unifskew has no single spectrum; use its children".into(),
        )),
    }
}

fn noise_scales(spec: &SyntheticSpec, values: &[f64]) -> Vec<f64> {
    match spec.spectrum {
        SpectrumModel::Scale => values.to_vec(),
        SpectrumModel::Variance => values.iter().map(|v| v.abs().sqrt()).collect(),
    }
}

/// Population second moment `E[x x^T]` of the rows `generate` draws.
pub fn population_covariance(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    match spec.kind {
        SyntheticKind::Diag => {
            let s = noise_scales(spec, &spectrum(spec)?);
            Ok(DenseMatrix::from_diag(&s.iter().map(|v| v * v).collect::<Vec<_>>()))
        }
        SyntheticKind::Uniform => {
            let s = noise_scales(spec, &spectrum(spec)?);
            let u = random_rotation(spec.d, spec.seed);
            let ev: Vec<f64> = s.iter().map(|v| v * v).collect();
            Ok(u.scale_columns(&ev)?.matmul_transposed(&u)?.symmetrized())
        }
        SyntheticKind::UnifSkew => {
            let (a, b) = spec.skew_children();
            Ok(population_covariance(&a)?.add(&population_covariance(&b)?)?.scale(0.25))
        }
    }
}

/// `n x d` matrix of i.i.d. zero-mean Gaussian rows.
pub fn generate(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    match spec.kind {
        SyntheticKind::Diag => {
            let s = noise_scales(spec, &spectrum(spec)?);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, DIAG_TAG));
            // Skip past the spectrum draws so rows use fresh randomness.
            for _ in 0..spec.d {
                laplace(&mut rng, 1.0);
            }
            let z = gaussian_matrix(&mut rng, spec.n, spec.d);
            z.scale_columns(&s)
        }
        SyntheticKind::Uniform => {
            let s = noise_scales(spec, &spectrum(spec)?);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, UNIFORM_TAG));
            for _ in 0..spec.d {
                rng.random::<f64>();
            }
            let u = random_rotation(spec.d, spec.seed);
            let z = gaussian_matrix(&mut rng, spec.n, spec.d);
            z.scale_columns(&s)?.matmul_transposed(&u)
        }
        SyntheticKind::UnifSkew => {
            let (a, b) = spec.skew_children();
            Ok(generate(&a)?.add(&generate(&b)?)?.scale(0.5))
        }
    }
}

/// An `X`/`W` pair of synthetic kinds, written `x-w` (e.g. `uniform-diag`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticPair {
    pub x: SyntheticKind,
    pub w: SyntheticKind,
}

impl SyntheticPair {
    /// `X` uses `seed`, `W` uses `seed + 1`.
    pub fn specs(&self, d: usize, n: usize, seed: u64) -> (SyntheticSpec, SyntheticSpec) {
        (
            SyntheticSpec::new(self.x, d, n, seed),
            SyntheticSpec::new(self.w, d, n, seed.wrapping_add(1)),
        )
    }
}

impl std::fmt::Display for SyntheticPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.x, self.w)
    }
}

impl std::str::FromStr for SyntheticPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (x, w) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("pair must look like kind-kind, got {s:?}")))?;
        Ok(SyntheticPair {
            x: x.parse()?,
            w: w.parse()?,
        })
    }
}
