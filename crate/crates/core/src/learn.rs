//! Regression and classification on projected features `R D_X^lambda x`.
//!
//! `D_X` is the diagonal of the training features' second moment. It is always
//! estimated from the training split only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DataMatrix, DenseMatrix, DEFAULT_EIG_TOL};
use crate::moments::estimate_diag;
use crate::numeric::{dot, mean_and_variance, mix_seed, norm_sq, CompensatedSum};
use crate::preprocess::{lambda_scales, DEFAULT_EPS};
use crate::rp::{project_rows, sample_projection, ProjectionKind, ProjectionMatrix, ProjectionSpec};

/// Default ridge strength; the normal equations add `ridge * n * I`.
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_EPOCHS: usize = 500;
const GRAD_TOL: f64 = 1e-8;
const SOLVE_RCOND: f64 = 1e-12;
const POWER_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: DataMatrix,
    pub labels: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(features: DataMatrix, labels: Vec<f64>) -> Result<Self> {
        if features.n_rows() == 0 {
            return Err(Error::EmptyData("dataset has no rows".into()));
        }
        if labels.len() != features.n_rows() {
            return Err(Error::dim(
                "LabeledDataset",
                format!("{} labels for {} rows", labels.len(), features.n_rows()),
            ));
        }
        if let Some(v) = labels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Labels(format!("non-finite label {v}")));
        }
        Ok(Self { features, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.features.n_cols()
    }

    /// Checks that every label is `-1` or `+1`.
    pub fn check_binary(&self) -> Result<()> {
        match self.labels.iter().position(|&v| v != 1.0 && v != -1.0) {
            Some(i) => Err(Error::Labels(format!("row {i} has label {}, expected -1 or +1", self.labels[i]))),
            None => Ok(()),
        }
    }

    /// Rows `[0, at)` and `[at, n)`.
    pub fn split_at(&self, at: usize) -> Result<(LabeledDataset, LabeledDataset)> {
        if at == 0 || at >= self.n_rows() {
            return Err(Error::InvalidArgument(format!("split point {at} outside (0, {})", self.n_rows())));
        }
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.n_rows()).collect();
        Ok((
            LabeledDataset::new(self.features.select_rows(&head), self.labels[..at].to_vec())?,
            LabeledDataset::new(self.features.select_rows(&tail), self.labels[at..].to_vec())?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Accuracy,
}

impl Loss {
    pub fn metric(self) -> Metric {
        match self {
            Loss::Squared => Metric::Mse,
            Loss::Logistic => Metric::Accuracy,
        }
    }

    #[inline]
    fn value(self, p: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => (p - y) * (p - y),
            Loss::Logistic => softplus(-y * p),
        }
    }

    /// Derivative with respect to the prediction `p`.
    #[inline]
    fn derivative(self, p: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => 2.0 * (p - y),
            Loss::Logistic => -y * sigmoid(-y * p),
        }
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `Z = (X D^lambda) R^T`. Sparse inputs are scaled in place and stay sparse
/// until projection.
pub fn transform(features: &DataMatrix, lambda: f64, diag_x: &[f64], spec: &ProjectionSpec) -> Result<DenseMatrix> {
    let r = sample_projection(spec)?;
    transform_with(features, lambda, diag_x, DEFAULT_EPS, &r)
}

fn transform_with(
    features: &DataMatrix,
    lambda: f64,
    diag_x: &[f64],
    eps: f64,
    r: &ProjectionMatrix,
) -> Result<DenseMatrix> {
    if diag_x.len() != features.n_cols() {
        return Err(Error::dim(
            "transform",
            format!("diag_x has {} entries for {} features", diag_x.len(), features.n_cols()),
        ));
    }
    let scales = lambda_scales(diag_x, lambda, eps)?;
    project_rows(&features.scale_columns(&scales)?, r)
}

fn check_targets(z: &DenseMatrix, y: &[f64]) -> Result<()> {
    if z.n_rows() == 0 {
        return Err(Error::EmptyData("no training rows".into()));
    }
    if z.n_rows() != y.len() {
        return Err(Error::dim("train", format!("{} rows, {} labels", z.n_rows(), y.len())));
    }
    Ok(())
}

/// Minimizer of `mean (z_i^T w - y_i)^2 + ridge |w|^2`, i.e.
/// `w = (Z^T Z + ridge n I)^{-1} Z^T y`, solved through an eigendecomposition.
pub fn train_linear(z: &DenseMatrix, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    check_targets(z, y)?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let n = z.n_rows() as f64;
    let k = z.n_cols();
    let mut gram = z.transposed_matmul(z)?;
    for i in 0..k {
        gram[(i, i)] += ridge * n;
    }
    let rhs = z.transposed_mul_vec(y)?;
    let eig = sym_eig(&gram, DEFAULT_EIG_TOL)?;
    let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let floor = SOLVE_RCOND * lmax;
    if let Some(index) = eig.eigenvalues.iter().position(|&l| !(l > floor)) {
        return Err(Error::Singular {
            index,
            value: eig.eigenvalues[index],
            floor,
        });
    }
    let v = &eig.eigenvectors;
    let coeffs = v.transposed_mul_vec(&rhs)?;
    let scaled: Vec<f64> = coeffs.iter().zip(&eig.eigenvalues).map(|(c, l)| c / l).collect();
    v.mul_vec(&scaled)
}

/// `mean loss(z_i^T w, y_i) + ridge |w|^2`.
pub fn objective(z: &DenseMatrix, y: &[f64], w: &[f64], loss: Loss, ridge: f64) -> Result<f64> {
    check_targets(z, y)?;
    let p = z.mul_vec(w)?;
    let total: CompensatedSum = p.iter().zip(y).map(|(&pi, &yi)| loss.value(pi, yi)).collect();
    Ok(total.value() / y.len() as f64 + ridge * norm_sq(w))
}

/// Gradient of [`objective`] with respect to `w`.
pub fn objective_gradient(z: &DenseMatrix, y: &[f64], w: &[f64], loss: Loss, ridge: f64) -> Result<Vec<f64>> {
    check_targets(z, y)?;
    let p = z.mul_vec(w)?;
    let n = y.len() as f64;
    let dl: Vec<f64> = p.iter().zip(y).map(|(&pi, &yi)| loss.derivative(pi, yi) / n).collect();
    let mut g = z.transposed_mul_vec(&dl)?;
    for (gi, wi) in g.iter_mut().zip(w) {
        *gi += 2.0 * ridge * wi;
    }
    Ok(g)
}

/// Largest eigenvalue of `Z^T Z` by power iteration from a fixed start.
fn gram_spectral_norm(z: &DenseMatrix) -> Result<f64> {
    let k = z.n_cols();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let u = z.transposed_mul_vec(&z.mul_vec(&v)?)?;
        let norm = norm_sq(&u).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        estimate = norm;
        v = u.into_iter().map(|x| x / norm).collect();
    }
    Ok(estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub epochs: usize,
    /// Fixed step size; `None` means `0.1 / L` with `L` the gradient's Lipschitz constant.
    pub step: Option<f64>,
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            step: None,
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// Lipschitz constant of the logistic objective's gradient:
/// `lambda_max(Z^T Z) / (4n) + 2 ridge`.
pub fn logistic_lipschitz(z: &DenseMatrix, ridge: f64) -> Result<f64> {
    Ok(gram_spectral_norm(z)? / (4.0 * z.n_rows() as f64) + 2.0 * ridge)
}

/// Full-batch gradient descent on the logistic objective. Also returns the
/// objective before each epoch.
pub fn train_logistic_traced(z: &DenseMatrix, y: &[f64], opts: &LogisticOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    check_targets(z, y)?;
    if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Labels(format!("row {i} has label {}, expected -1 or +1", y[i])));
    }
    let step = match opts.step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::StepSize(format!("step must be positive, got {s}"))),
        None => {
            let l = logistic_lipschitz(z, opts.ridge)?;
            if l == 0.0 {
                return Ok((vec![0.0; z.n_cols()], Vec::new()));
            }
            0.1 / l
        }
    };
    let mut w = vec![0.0; z.n_cols()];
    let mut trace = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        trace.push(objective(z, y, &w, Loss::Logistic, opts.ridge)?);
        let g = objective_gradient(z, y, &w, Loss::Logistic, opts.ridge)?;
        if norm_sq(&g).sqrt() < GRAD_TOL {
            break;
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= step * gi;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepSize(format!("logistic weights diverged with step {step:e}")));
        }
    }
    Ok((w, trace))
}

pub fn train_logistic(z: &DenseMatrix, y: &[f64], opts: &LogisticOptions) -> Result<Vec<f64>> {
    Ok(train_logistic_traced(z, y, opts)?.0)
}

fn fit(z: &DenseMatrix, y: &[f64], loss: Loss, ridge: f64, logistic: &LogisticOptions) -> Result<Vec<f64>> {
    match loss {
        Loss::Squared => train_linear(z, y, ridge),
        Loss::Logistic => train_logistic(z, y, &LogisticOptions { ridge, ..*logistic }),
    }
}

/// MSE of raw predictions, or accuracy of their signs (0 counts as +1).
pub fn evaluate(metric: Metric, predictions: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    match metric {
        Metric::Mse => {
            let s: CompensatedSum = predictions.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).collect();
            s.value() / n
        }
        Metric::Accuracy => {
            let hits = predictions
                .iter()
                .zip(y)
                .filter(|(p, t)| (if **p >= 0.0 { 1.0 } else { -1.0 }) == **t)
                .count();
            hits as f64 / n
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub loss: Loss,
    pub ridge: f64,
    pub seed: u64,
    pub projection_kind: ProjectionKind,
    pub eps: f64,
    pub logistic: LogisticOptions,
}

impl SweepConfig {
    pub fn new(lambdas: Vec<f64>, ks: Vec<usize>, trials: usize, loss: Loss, seed: u64) -> Self {
        Self {
            lambdas,
            ks,
            trials,
            loss,
            ridge: DEFAULT_RIDGE,
            seed,
            projection_kind: ProjectionKind::SignScaled,
            eps: DEFAULT_EPS,
            logistic: LogisticOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda: f64,
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metric: Metric,
    /// Ordered by lambda, then k, following the config lists.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, lambda: f64, k: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.lambda == lambda && c.k == k)
    }

    /// Best cell at a given `k` (lowest MSE or highest accuracy).
    pub fn best_at(&self, k: usize) -> Option<&SweepCell> {
        let cells = self.cells.iter().filter(|c| c.k == k);
        match self.metric {
            Metric::Mse => cells.min_by(|a, b| a.mean.total_cmp(&b.mean)),
            Metric::Accuracy => cells.max_by(|a, b| a.mean.total_cmp(&b.mean)),
        }
    }
}

/// Trial `t` at a given `k` uses projection seed `seed + t` for every lambda.
pub fn sweep(train: &LabeledDataset, test: &LabeledDataset, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least 2 trials".into()));
    }
    if cfg.lambdas.is_empty() || cfg.ks.is_empty() {
        return Err(Error::InvalidArgument("a sweep needs at least one lambda and one k".into()));
    }
    let d = train.n_cols();
    if test.n_cols() != d {
        return Err(Error::dim("sweep", format!("train has {d} features, test has {}", test.n_cols())));
    }
    if cfg.loss == Loss::Logistic {
        train.check_binary()?;
        test.check_binary()?;
    }
    let diag_x = estimate_diag(&train.features)?.diag().to_vec();
    let metric = cfg.loss.metric();
    let jobs: Vec<(usize, u64)> = cfg
        .ks
        .iter()
        .flat_map(|&k| (0..cfg.trials as u64).map(move |t| (k, t)))
        .collect();
    for &k in &cfg.ks {
        ProjectionSpec::new(cfg.seed, d, k, cfg.projection_kind)?;
    }
    let outcomes: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(k, t)| {
            let spec = ProjectionSpec::new(cfg.seed.wrapping_add(t), d, k, cfg.projection_kind)?;
            let r = sample_projection(&spec)?;
            cfg.lambdas
                .iter()
                .map(|&lambda| {
                    let z_train = transform_with(&train.features, lambda, &diag_x, cfg.eps, &r)?;
                    let w = fit(&z_train, &train.labels, cfg.loss, cfg.ridge, &cfg.logistic)?;
                    let z_test = transform_with(&test.features, lambda, &diag_x, cfg.eps, &r)?;
                    Ok(evaluate(metric, &z_test.mul_vec(&w)?, &test.labels))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(cfg.lambdas.len() * cfg.ks.len());
    for (li, &lambda) in cfg.lambdas.iter().enumerate() {
        for (ki, &k) in cfg.ks.iter().enumerate() {
            let values: Vec<f64> = outcomes[ki * cfg.trials..(ki + 1) * cfg.trials]
                .iter()
                .map(|o| o[li])
                .collect();
            let (mean, var) = mean_and_variance(&values);
            cells.push(SweepCell {
                lambda,
                k,
                trials: cfg.trials,
                mean,
                std: var.sqrt(),
            });
        }
    }
    Ok(SweepResult { metric, cells })
}

/// A trained model `x -> w^T R D_X^lambda x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaModel {
    pub lambda: f64,
    pub diag_x: Vec<f64>,
    pub seed: u64,
    pub input_dim: usize,
    pub target_dim: usize,
    pub projection_kind: ProjectionKind,
    pub w: Vec<f64>,
    pub loss: Loss,
    pub ridge: f64,
    pub eps: f64,
}

impl LambdaModel {
    pub fn projection(&self) -> Result<ProjectionSpec> {
        ProjectionSpec::new(self.seed, self.input_dim, self.target_dim, self.projection_kind)
    }

    /// Raw scores `w^T R D^lambda x` for every row.
    pub fn predict(&self, features: &DataMatrix) -> Result<Vec<f64>> {
        let r = sample_projection(&self.projection()?)?;
        transform_with(features, self.lambda, &self.diag_x, self.eps, &r)?.mul_vec(&self.w)
    }
}

/// Training objective as a function of both `w` and `lambda` for one fixed `R`.
pub struct LambdaObjective<'a> {
    features: &'a DataMatrix,
    labels: &'a [f64],
    diag_x: Vec<f64>,
    log_diag: Vec<f64>,
    eps: f64,
    r: ProjectionMatrix,
    loss: Loss,
    ridge: f64,
}

impl<'a> LambdaObjective<'a> {
    pub fn new(ds: &'a LabeledDataset, spec: &ProjectionSpec, loss: Loss, ridge: f64, eps: f64) -> Result<Self> {
        if loss == Loss::Logistic {
            ds.check_binary()?;
        }
        let diag_x = estimate_diag(&ds.features)?.diag().to_vec();
        // Guarded coordinates have a lambda-independent scale of 1.
        let max = diag_x.iter().copied().fold(0.0, f64::max);
        let log_diag = diag_x
            .iter()
            .map(|&v| if v <= eps * max { 0.0 } else { v.ln() })
            .collect();
        Ok(Self {
            features: &ds.features,
            labels: &ds.labels,
            diag_x,
            log_diag,
            eps,
            r: sample_projection(spec)?,
            loss,
            ridge,
        })
    }

    pub fn diag_x(&self) -> &[f64] {
        &self.diag_x
    }

    pub fn features_at(&self, lambda: f64) -> Result<DenseMatrix> {
        transform_with(self.features, lambda, &self.diag_x, self.eps, &self.r)
    }

    /// `d Z / d lambda = (X (ln D) D^lambda) R^T`.
    fn features_derivative(&self, lambda: f64) -> Result<DenseMatrix> {
        let scales = lambda_scales(&self.diag_x, lambda, self.eps)?;
        let d: Vec<f64> = scales.iter().zip(&self.log_diag).map(|(s, l)| s * l).collect();
        project_rows(&self.features.scale_columns(&d)?, &self.r)
    }

    pub fn value(&self, w: &[f64], lambda: f64) -> Result<f64> {
        objective(&self.features_at(lambda)?, self.labels, w, self.loss, self.ridge)
    }

    pub fn grad_w(&self, w: &[f64], lambda: f64) -> Result<Vec<f64>> {
        objective_gradient(&self.features_at(lambda)?, self.labels, w, self.loss, self.ridge)
    }

    pub fn grad_lambda(&self, w: &[f64], lambda: f64) -> Result<f64> {
        let z = self.features_at(lambda)?;
        let dz = self.features_derivative(lambda)?;
        let p = z.mul_vec(w)?;
        let dp = dz.mul_vec(w)?;
        let n = self.labels.len() as f64;
        let s: CompensatedSum = p
            .iter()
            .zip(&dp)
            .zip(self.labels)
            .map(|((&pi, &dpi), &yi)| self.loss.derivative(pi, yi) * dpi)
            .collect();
        Ok(s.value() / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOptions {
    pub init_lambda: f64,
    pub epochs: usize,
    /// Initial `w` step for the logistic loss; `None` means `1 / L` at the
    /// initial lambda. The squared loss solves for `w` exactly instead.
    pub step_w: Option<f64>,
    pub step_lambda: f64,
    pub ridge: f64,
    pub eps: f64,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            init_lambda: 0.0,
            epochs: 100,
            step_w: None,
            step_lambda: 1.0,
            ridge: DEFAULT_RIDGE,
            eps: DEFAULT_EPS,
        }
    }
}

fn finite_or_step_error(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::StepSize(format!("{what} became non-finite")))
    }
}

/// Gradient-based fit over `(w, lambda)`. Every accepted step lowers the
/// objective; steps are halved until that holds and grow again after success.
/// For the squared loss `w` is always the exact solve at the current lambda, so
/// only lambda takes gradient steps; the logistic loss steps both at once.
/// Returns the model and the objective after each epoch.
pub fn joint_train_with_history(
    ds: &LabeledDataset,
    spec: &ProjectionSpec,
    loss: Loss,
    opts: &JointOptions,
) -> Result<(LambdaModel, Vec<f64>)> {
    if !(opts.step_lambda > 0.0) || !opts.step_lambda.is_finite() {
        return Err(Error::StepSize(format!("lambda step must be positive, got {}", opts.step_lambda)));
    }
    let obj = LambdaObjective::new(ds, spec, loss, opts.ridge, opts.eps)?;
    let mut lambda = opts.init_lambda;
    let mut w = match loss {
        Loss::Squared => train_linear(&obj.features_at(lambda)?, &ds.labels, opts.ridge)?,
        Loss::Logistic => vec![0.0; spec.target_dim],
    };
    let step_w = match (loss, opts.step_w) {
        (_, Some(s)) if s > 0.0 && s.is_finite() => s,
        (_, Some(s)) => return Err(Error::StepSize(format!("w step must be positive, got {s}"))),
        (Loss::Logistic, None) => {
            let l = logistic_lipschitz(&obj.features_at(lambda)?, opts.ridge)?;
            if l > 0.0 { 1.0 / l } else { 1.0 }
        }
        (Loss::Squared, None) => 0.0,
    };
    let mut current = finite_or_step_error(obj.value(&w, lambda)?, "loss")?;
    let mut history = vec![current];
    // Step multiplier carried across epochs: doubled after an accepted step,
    // halved on every rejected candidate.
    let mut scale = 1.0;
    for _ in 0..opts.epochs {
        let g_lambda = finite_or_step_error(obj.grad_lambda(&w, lambda)?, "lambda gradient")?;
        let g_w = if loss == Loss::Logistic { obj.grad_w(&w, lambda)? } else { vec![0.0; w.len()] };
        if g_lambda.abs() < GRAD_TOL && norm_sq(&g_w).sqrt() < GRAD_TOL {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand_lambda = lambda - scale * opts.step_lambda * g_lambda;
            let candidate = || -> Result<(Vec<f64>, f64)> {
                let cand_w: Vec<f64> = match loss {
                    // Score lambda by its best w; the gradient above is also the
                    // gradient of this profile objective.
                    Loss::Squared => train_linear(&obj.features_at(cand_lambda)?, &ds.labels, opts.ridge)?,
                    Loss::Logistic => w.iter().zip(&g_w).map(|(wi, gi)| wi - scale * step_w * gi).collect(),
                };
                let v = obj.value(&cand_w, cand_lambda)?;
                Ok((cand_w, v))
            };
            // Overflowing scales or a singular solve just mean the step was too long.
            if let Ok((cand_w, v)) = candidate() {
                if v.is_finite() && v < current {
                    accepted = Some((cand_w, cand_lambda, v));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((new_w, new_lambda, v)) = accepted else {
            break;
        };
        lambda = new_lambda;
        w = new_w;
        current = v;
        scale *= 2.0;
        history.push(current);
    }
    let model = LambdaModel {
        lambda,
        diag_x: obj.diag_x().to_vec(),
        seed: spec.seed,
        input_dim: spec.input_dim,
        target_dim: spec.target_dim,
        projection_kind: spec.kind,
        w,
        loss,
        ridge: opts.ridge,
        eps: opts.eps,
    };
    Ok((model, history))
}

pub fn joint_train(ds: &LabeledDataset, spec: &ProjectionSpec, loss: Loss, opts: &JointOptions) -> Result<LambdaModel> {
    Ok(joint_train_with_history(ds, spec, loss, opts)?.0)
}

/// Regression task whose feature second moments span four orders of
/// magnitude (standard deviations log-spaced over `[0.1, 10]`), with an
/// isotropic Gaussian true regressor and noise at 10% of the signal's std.
pub fn heteroscedastic_regression(d: usize, n: usize, seed: u64) -> Result<LabeledDataset> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("need d >= 1 and n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x4E6));
    let std: Vec<f64> = (0..d)
        .map(|j| if d == 1 { 1.0 } else { 10f64.powf(-1.0 + 2.0 * j as f64 / (d - 1) as f64) })
        .collect();
    let w_true: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let signal_var: f64 = std.iter().zip(&w_true).map(|(s, w)| s * s * w * w).sum();
    let noise = 0.1 * signal_var.sqrt();
    let x = DenseMatrix::from_fn(n, d, |_, j| std[j] * rng.sample::<f64, _>(StandardNormal));
    let labels = x
        .rows()
        .map(|row| dot(row, &w_true) + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    LabeledDataset::new(x.into(), labels)
}

/// Two Gaussian clusters at `+-mu` with `|mu| = separation` and unit noise,
/// labels `+-1` by cluster.
pub fn two_cluster_classification(d: usize, n: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("need d >= 1 and n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC1A));
    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = norm_sq(&dir).sqrt();
    let mu: Vec<f64> = dir.iter().map(|v| v * separation / norm).collect();
    let labels: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let x = DenseMatrix::from_fn(n, d, |i, j| labels[i] * mu[j] + rng.sample::<f64, _>(StandardNormal));
    LabeledDataset::new(x.into(), labels)
}
