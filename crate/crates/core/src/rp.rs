//! Oblivious random projections and their inner-product variance.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, DenseMatrix};
use crate::numeric::{dot, mean_and_variance, norm_sq, CompensatedSum};

/// Distribution of the projection entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    /// i.i.d. `+-1/sqrt(k)`.
    #[serde(rename = "sign")]
    SignScaled,
    /// i.i.d. `N(0, 1/k)`.
    Gaussian,
    /// `R = I`; requires `k == d`. Not random, used to check pipelines.
    Identity,
}

impl ProjectionKind {
    /// Constant `C` in `Var <= (C <x,w>^2 + |x|^2 |w|^2) / k`.
    pub fn variance_constant(self) -> f64 {
        match self {
            ProjectionKind::SignScaled => 1.0,
            ProjectionKind::Gaussian => 2.0,
            ProjectionKind::Identity => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::SignScaled => "sign",
            ProjectionKind::Gaussian => "gaussian",
            ProjectionKind::Identity => "identity",
        }
    }
}

impl std::fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" | "signscaled" => Ok(ProjectionKind::SignScaled),
            "gaussian" => Ok(ProjectionKind::Gaussian),
            "identity" => Ok(ProjectionKind::Identity),
            other => Err(Error::InvalidArgument(format!("unknown projection kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub input_dim: usize,
    pub target_dim: usize,
    pub kind: ProjectionKind,
}

impl ProjectionSpec {
    pub fn new(seed: u64, input_dim: usize, target_dim: usize, kind: ProjectionKind) -> Result<Self> {
        let spec = Self {
            seed,
            input_dim,
            target_dim,
            kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_dim == 0 {
            return Err(Error::dim("projection", "target dimension must be at least 1"));
        }
        if self.target_dim > self.input_dim {
            return Err(Error::dim(
                "projection",
                format!("target dimension {} exceeds input dimension {}", self.target_dim, self.input_dim),
            ));
        }
        if self.kind == ProjectionKind::Identity && self.target_dim != self.input_dim {
            return Err(Error::dim("projection", "identity projection needs k == d"));
        }
        Ok(())
    }

    /// Same projection family with seed `seed + t`.
    pub fn for_trial(&self, t: u64) -> Self {
        Self {
            seed: self.seed.wrapping_add(t),
            ..*self
        }
    }

    pub fn with_target_dim(&self, k: usize) -> Self {
        Self {
            target_dim: k,
            ..*self
        }
    }
}

/// Produces projection entries in row-major order. Both the materialized matrix
/// and the streaming Monte Carlo path read from this, so they agree exactly.
struct EntryStream {
    rng: ChaCha8Rng,
    kind: ProjectionKind,
    scale: f64,
    bits: u64,
    remaining: u32,
}

impl EntryStream {
    fn new(spec: &ProjectionSpec) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            kind: spec.kind,
            scale: 1.0 / (spec.target_dim as f64).sqrt(),
            bits: 0,
            remaining: 0,
        }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        match self.kind {
            ProjectionKind::SignScaled => {
                if self.remaining == 0 {
                    self.bits = self.rng.next_u64();
                    self.remaining = 64;
                }
                let bit = self.bits & 1;
                self.bits >>= 1;
                self.remaining -= 1;
                if bit == 1 {
                    self.scale
                } else {
                    -self.scale
                }
            }
            ProjectionKind::Gaussian => self.rng.sample::<f64, _>(StandardNormal) * self.scale,
            ProjectionKind::Identity => unreachable!("identity projections are not sampled"),
        }
    }
}

/// A sampled `k x d` projection matrix, entries already scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    spec: ProjectionSpec,
    values: DenseMatrix,
}

impl ProjectionMatrix {
    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn project_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.values.mul_vec(x)
    }
}

pub fn sample_projection(spec: &ProjectionSpec) -> Result<ProjectionMatrix> {
    spec.validate()?;
    let (k, d) = (spec.target_dim, spec.input_dim);
    let values = if spec.kind == ProjectionKind::Identity {
        DenseMatrix::identity(d)
    } else {
        let mut stream = EntryStream::new(spec);
        DenseMatrix::from_fn(k, d, |_, _| stream.next())
    };
    Ok(ProjectionMatrix {
        spec: *spec,
        values,
    })
}

/// Row `i` of the output is `R * row_i`.
pub fn project_rows(m: &DataMatrix, r: &ProjectionMatrix) -> Result<DenseMatrix> {
    if m.n_cols() != r.spec.input_dim {
        return Err(Error::dim(
            "project_rows",
            format!("data has {} columns, projection expects {}", m.n_cols(), r.spec.input_dim),
        ));
    }
    match m {
        DataMatrix::Dense(d) => d.matmul_transposed(&r.values),
        DataMatrix::Sparse(s) => s.mul_dense(&r.values.transpose()),
    }
}

/// Exact variance of `<Rx, Rw>` for the scaled sign projection:
/// `(<x,w>^2 + |x|^2 |w|^2 - 2 sum_i x_i^2 w_i^2) / k`.
pub fn sign_variance_exact(x: &[f64], w: &[f64], k: usize) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::dim("sign_variance_exact", format!("{} vs {}", x.len(), w.len())));
    }
    if k == 0 {
        return Err(Error::dim("sign_variance_exact", "k must be at least 1"));
    }
    let ip = dot(x, w);
    let fourth: CompensatedSum = x.iter().zip(w).map(|(a, b)| a * a * b * b).collect();
    let v = ip * ip + norm_sq(x) * norm_sq(w) - 2.0 * fourth.value();
    Ok(v.max(0.0) / k as f64)
}

/// `(C <x,w>^2 + |x|^2 |w|^2) / k`.
pub fn variance_bound(x: &[f64], w: &[f64], k: usize, c: f64) -> f64 {
    let ip = dot(x, w);
    (c * ip * ip + norm_sq(x) * norm_sq(w)) / k as f64
}

/// Monte Carlo mean and unbiased variance of `<Rx, Rw>`; trial `t` uses
/// `base.for_trial(t)`.
pub fn inner_product_mc(x: &[f64], w: &[f64], base: &ProjectionSpec, trials: usize) -> Result<(f64, f64)> {
    if x.len() != w.len() || x.len() != base.input_dim {
        return Err(Error::dim(
            "inner_product_mc",
            format!("x {}, w {}, projection {}", x.len(), w.len(), base.input_dim),
        ));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("inner_product_mc needs at least 2 trials".into()));
    }
    base.validate()?;
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| projected_inner_product(x, w, &base.for_trial(t)))
        .collect();
    Ok(mean_and_variance(&samples))
}

/// `<Rx, Rw>` without materializing `R`.
fn projected_inner_product(x: &[f64], w: &[f64], spec: &ProjectionSpec) -> f64 {
    if spec.kind == ProjectionKind::Identity {
        return dot(x, w);
    }
    let mut stream = EntryStream::new(spec);
    let mut acc = 0.0;
    for _ in 0..spec.target_dim {
        let mut rx = 0.0;
        let mut rw = 0.0;
        for (a, b) in x.iter().zip(w) {
            let r = stream.next();
            rx += r * a;
            rw += r * b;
        }
        acc += rx * rw;
    }
    acc
}
