//! Approximate matrix products `X W^T ~ (X~ R^T)(W~ R^T)^T` with oblivious,
//! quick (diagonal) and optimal preprocessing, plus the trial harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DEFAULT_FLOOR};
use crate::moments::{estimate_full, SecondMoment};
use crate::numeric::{mean_and_variance, mix_seed, CompensatedSum};
use crate::preprocess::{build_optimal, build_quick, Preprocessor, DEFAULT_EPS};
use crate::rp::{project_rows, sample_projection, ProjectionKind, ProjectionSpec};

const SUBSAMPLE_TAG: u64 = 0x5AB5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Oblivious,
    Quick,
    Optimal,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Oblivious => "oblivious",
            MethodKind::Quick => "quick",
            MethodKind::Optimal => "optimal",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oblivious" => Ok(MethodKind::Oblivious),
            "quick" => Ok(MethodKind::Quick),
            "optimal" => Ok(MethodKind::Optimal),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FmmMethod {
    pub kind: MethodKind,
    pub projection_kind: ProjectionKind,
}

impl FmmMethod {
    pub fn new(kind: MethodKind, projection_kind: ProjectionKind) -> Self {
        Self { kind, projection_kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub method: FmmMethod,
    pub k: usize,
    pub trials: usize,
    pub mean_sq_error: f64,
    /// Standard deviation of the per-trial squared error.
    pub std_sq_error: f64,
    /// Standard error of `mean_sq_error`.
    pub sem_sq_error: f64,
}

pub fn exact_product(x: &DenseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    if x.n_cols() != w.n_cols() {
        return Err(Error::dim("exact_product", format!("{} vs {} columns", x.n_cols(), w.n_cols())));
    }
    x.matmul_transposed(w)
}

/// `|exact - approx|_F^2`.
pub fn squared_error(exact: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    if exact.shape() != approx.shape() {
        return Err(Error::dim("squared_error", format!("{:?} vs {:?}", exact.shape(), approx.shape())));
    }
    Ok(exact
        .as_slice()
        .iter()
        .zip(approx.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .collect::<CompensatedSum>()
        .value())
}

/// The preprocessor a method applies, built from the given moments.
pub fn method_preprocessor(
    kind: MethodKind,
    moments_x: &SecondMoment,
    moments_w: &SecondMoment,
    floor: f64,
) -> Result<Preprocessor> {
    if moments_x.dim() != moments_w.dim() {
        return Err(Error::dim("method_preprocessor", format!("{} vs {}", moments_x.dim(), moments_w.dim())));
    }
    match kind {
        MethodKind::Oblivious => Ok(Preprocessor::Identity),
        MethodKind::Quick => build_quick(moments_x.diag(), moments_w.diag(), DEFAULT_EPS),
        MethodKind::Optimal => {
            if moments_x.full().is_none() || moments_w.full().is_none() {
                return Err(Error::Configuration(
                    "the optimal method needs full second moments of both inputs".into(),
                ));
            }
            build_optimal(moments_x, moments_w, floor)
        }
    }
}

/// Sketch product for one method and one projection.
pub fn approx_product(
    x: &DenseMatrix,
    w: &DenseMatrix,
    method: FmmMethod,
    spec: &ProjectionSpec,
    moments_x: &SecondMoment,
    moments_w: &SecondMoment,
) -> Result<DenseMatrix> {
    if method.projection_kind != spec.kind {
        return Err(Error::Configuration(format!(
            "method uses {} projections but the spec is {}",
            method.projection_kind, spec.kind
        )));
    }
    let p = method_preprocessor(method.kind, moments_x, moments_w, DEFAULT_FLOOR)?;
    let xt = p.apply_x(&x.clone().into())?.to_dense();
    let wt = p.apply_w(&w.clone().into())?.to_dense();
    sketch_product(&xt, &wt, spec)
}

fn sketch_product(xt: &DenseMatrix, wt: &DenseMatrix, spec: &ProjectionSpec) -> Result<DenseMatrix> {
    let r = sample_projection(spec)?;
    let px = project_rows(&xt.clone().into(), &r)?;
    let pw = project_rows(&wt.clone().into(), &r)?;
    px.matmul_transposed(&pw)
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub methods: Vec<FmmMethod>,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Estimate moments from this many seeded rows of each input instead of all rows.
    pub moment_rows: Option<usize>,
    pub floor: f64,
}

impl BenchmarkConfig {
    pub fn new(methods: Vec<FmmMethod>, ks: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            methods,
            ks,
            trials,
            seed,
            moment_rows: None,
            floor: DEFAULT_FLOOR,
        }
    }
}

fn moments_for(m: &DenseMatrix, rows: Option<usize>, seed: u64, stream: u64) -> Result<SecondMoment> {
    match rows {
        None => estimate_full(&m.clone().into()),
        Some(r) => {
            if r == 0 || r > m.n_rows() {
                return Err(Error::InvalidArgument(format!(
                    "moment subsample of {r} rows from a matrix with {}",
                    m.n_rows()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SUBSAMPLE_TAG + stream));
            let mut idx = rand::seq::index::sample(&mut rng, m.n_rows(), r).into_vec();
            idx.sort_unstable();
            let sub = crate::linalg::DataMatrix::from(m.clone()).select_rows(&idx);
            estimate_full(&sub)
        }
    }
}

/// Trial `t` at every `k` uses projection seed `seed + t`, shared by all
/// methods, so method comparisons are paired.
pub fn run_benchmark(x: &DenseMatrix, w: &DenseMatrix, config: &BenchmarkConfig) -> Result<Vec<TrialStats>> {
    let seeds: Vec<u64> = (0..config.trials as u64).map(|t| config.seed.wrapping_add(t)).collect();
    run_benchmark_with_seeds(x, w, config, &seeds)
}

/// Like [`run_benchmark`] but with explicit per-trial projection seeds.
pub fn run_benchmark_with_seeds(
    x: &DenseMatrix,
    w: &DenseMatrix,
    config: &BenchmarkConfig,
    trial_seeds: &[u64],
) -> Result<Vec<TrialStats>> {
    if trial_seeds.len() < 2 {
        return Err(Error::InvalidArgument("a benchmark needs at least 2 trials".into()));
    }
    if config.methods.is_empty() || config.ks.is_empty() {
        return Err(Error::InvalidArgument("a benchmark needs at least one method and one k".into()));
    }
    let exact = exact_product(x, w)?;
    let d = x.n_cols();
    for &k in &config.ks {
        if k == 0 || k > d {
            return Err(Error::dim("run_benchmark", format!("k = {k} outside [1, {d}]")));
        }
    }
    let needs_moments = config.methods.iter().any(|m| m.kind != MethodKind::Oblivious);
    let moments = if needs_moments {
        Some((
            moments_for(x, config.moment_rows, config.seed, 0)?,
            moments_for(w, config.moment_rows, config.seed, 1)?,
        ))
    } else {
        None
    };
    let prepared: Vec<(DenseMatrix, DenseMatrix)> = config
        .methods
        .iter()
        .map(|m| {
            let p = match &moments {
                Some((mx, mw)) => method_preprocessor(m.kind, mx, mw, config.floor)?,
                None => Preprocessor::Identity,
            };
            Ok((p.apply_x(&x.clone().into())?.to_dense(), p.apply_w(&w.clone().into())?.to_dense()))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(config.ks.len() * config.methods.len());
    for &k in &config.ks {
        let errors: Vec<Vec<f64>> = trial_seeds
            .par_iter()
            .map(|&seed| {
                config
                    .methods
                    .iter()
                    .zip(&prepared)
                    .map(|(m, (xt, wt))| {
                        let spec = ProjectionSpec::new(seed, d, k, m.projection_kind)?;
                        squared_error(&exact, &sketch_product(xt, wt, &spec)?)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (mi, method) in config.methods.iter().enumerate() {
            let per_trial: Vec<f64> = errors.iter().map(|e| e[mi]).collect();
            let (mean, var) = mean_and_variance(&per_trial);
            let std = var.sqrt();
            out.push(TrialStats {
                method: *method,
                k,
                trials: per_trial.len(),
                mean_sq_error: mean,
                std_sq_error: std,
                sem_sq_error: std / (per_trial.len() as f64).sqrt(),
            });
        }
    }
    Ok(out)
}
