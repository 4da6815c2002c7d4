//! Command-line experiment drivers.
//!
//! Each subcommand is a pure function of its flags and input files. The thread
//! count only changes how trials are scheduled, so it is never recorded.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fmm::{run_benchmark, BenchmarkConfig, FmmMethod, MethodKind};
use crate::io::{
    self, JointFitRecord, PhiRecord, ResultEntry, ResultsDocument, SweepCellRecord, TrialStatsRecord,
    VarianceCheckRecord,
};
use crate::learn::{self, JointOptions, LabeledDataset, LogisticOptions, Loss, SweepConfig};
use crate::linalg::{DenseMatrix, DEFAULT_FLOOR};
use crate::moments::estimate_full;
use crate::numeric::{dot, mix_seed};
use crate::preprocess::{
    build_optimal_detailed, build_quick, phi_monte_carlo, phi_report, Preprocessor, VectorSampler, DEFAULT_EPS,
};
use crate::rp::{inner_product_mc, sign_variance_exact, variance_bound, ProjectionKind, ProjectionSpec};
use crate::synth::{generate, SpectrumModel, SyntheticKind, SyntheticPair, SyntheticSpec};

/// Relative tolerance on the Monte Carlo variance in `variance-check`.
const VARIANCE_REL_TOL: f64 = 0.05;
/// Allowed distance of the Monte Carlo mean from `<x,w>`, in standard errors.
const MEAN_Z_TOL: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(name = "ddrp", version, about = "Data-dependent random projection experiments")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "DDRP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic matrix (or an X/W pair) as CSV.
    Synth(SynthArgs),
    /// Squared error of sketched X W^T for each method and target dimension.
    FmmBench(FmmArgs),
    /// Exact Phi for the identity, quick and optimal preprocessors.
    PhiReport(PhiArgs),
    /// Lambda/k sweep of projected ridge regression.
    Regress(LearnArgs),
    /// Lambda/k sweep of projected logistic regression on -1/+1 labels.
    Classify(LearnArgs),
    /// Monte Carlo check of the sign projection's inner-product variance.
    VarianceCheck(VarianceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Orientation {
    /// Rows are the vectors being compared.
    Data,
    /// Transpose both inputs so feature columns are compared.
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Csv,
    Libsvm,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, conflicts_with = "pair", required_unless_present = "pair")]
    pub kind: Option<SyntheticKind>,
    /// `x-w`, e.g. `uniform-diag`; X uses the seed and W the seed plus one.
    #[arg(long)]
    pub pair: Option<SyntheticPair>,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub laplace_scale: f64,
    #[arg(long, default_value = "scale")]
    pub spectrum: SpectrumModel,
    /// CSV path for the matrix (X for a pair). Stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV path for W when generating a pair.
    #[arg(long, requires = "pair")]
    pub out_w: Option<PathBuf>,
}

/// Two matrices from files, or a synthetic pair.
#[derive(Debug, Args)]
pub struct PairInput {
    #[arg(long, requires = "w", conflicts_with = "pair")]
    pub x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    pub w: Option<PathBuf>,
    /// Skip the first line of both CSV inputs.
    #[arg(long)]
    pub header: bool,
    #[arg(long, required_unless_present = "x")]
    pub pair: Option<SyntheticPair>,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Seed for the synthetic pair; defaults to `--seed`.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, default_value = "scale")]
    pub spectrum: SpectrumModel,
    #[arg(long, value_enum, default_value_t = Orientation::Data)]
    pub orientation: Orientation,
}

#[derive(Debug, Args)]
pub struct FmmArgs {
    #[command(flatten)]
    pub input: PairInput,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40,80")]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "oblivious,quick,optimal")]
    pub methods: Vec<MethodKind>,
    #[arg(long, default_value = "sign")]
    pub projection: ProjectionKind,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate moments from this many sampled rows instead of all of them.
    #[arg(long)]
    pub moment_rows: Option<usize>,
    /// Relative eigenvalue floor for the optimal preprocessor.
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready CSV, one row per (method, k).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhiArgs {
    #[command(flatten)]
    pub input: PairInput,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    /// Also estimate Phi by sampling rows of X and W this many times.
    #[arg(long)]
    pub mc_trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out data; without it the first `--split` fraction of `--train` is
    /// used for training and the rest for testing.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub format: DataFormat,
    #[arg(long)]
    pub header: bool,
    /// Label column for CSV input; the last column by default.
    #[arg(long)]
    pub label_column: Option<usize>,
    /// Feature dimension for libsvm input; the largest index by default.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = learn::DEFAULT_RIDGE)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sign")]
    pub projection: ProjectionKind,
    /// Gradient descent epochs for the logistic loss.
    #[arg(long, default_value_t = learn::DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Logistic step size; 0.1 over the Lipschitz estimate by default.
    #[arg(long)]
    pub step: Option<f64>,
    /// Also fit lambda jointly with the weights for every k.
    #[arg(long)]
    pub joint: bool,
    #[arg(long, default_value_t = 100)]
    pub joint_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Table-shaped CSV: one row per lambda, mean and std columns per k.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 200_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Output {
    Document(ResultsDocument, Option<PathBuf>),
    Text(String),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn join_reals(items: &[f64]) -> String {
    items.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth_spec(kind: SyntheticKind, args: &SynthArgs, seed: u64) -> SyntheticSpec {
    let mut spec = SyntheticSpec::new(kind, args.d, args.n, seed);
    spec.laplace_scale = args.laplace_scale;
    spec.spectrum = args.spectrum;
    spec
}

fn cmd_synth(args: &SynthArgs) -> Result<Output> {
    let mut doc = ResultsDocument::new("synth");
    doc.set("d", args.d)
        .set("n", args.n)
        .set("seed", args.seed)
        .set("laplace_scale", format!("{:?}", args.laplace_scale))
        .set("spectrum", format!("{:?}", args.spectrum).to_lowercase());
    match (&args.kind, &args.pair) {
        (Some(kind), _) => {
            doc.set("kind", kind);
            let m = generate(&synth_spec(*kind, args, args.seed))?;
            let csv = io::format_dense_csv(&m);
            match &args.out {
                Some(path) => write_text(path, &csv)?,
                None => return Ok(Output::Text(csv)),
            }
        }
        (None, Some(pair)) => {
            doc.set("pair", format!("{}-{}", pair.x, pair.w));
            let (out_x, out_w) = match (&args.out, &args.out_w) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Configuration("a pair needs both --out and --out-w".into())),
            };
            let (sx, sw) = pair.specs(args.d, args.n, args.seed);
            let x = generate(&synth_spec(sx.kind, args, sx.seed))?;
            let w = generate(&synth_spec(sw.kind, args, sw.seed))?;
            write_text(out_x, &io::format_dense_csv(&x))?;
            write_text(out_w, &io::format_dense_csv(&w))?;
        }
        (None, None) => return Err(Error::Configuration("one of --kind or --pair is required".into())),
    }
    Ok(Output::Document(doc, None))
}

/// Loads or generates X and W, records the source in `doc`, and applies the
/// orientation.
fn load_pair(input: &PairInput, seed: u64, doc: &mut ResultsDocument) -> Result<(DenseMatrix, DenseMatrix)> {
    let (x, w) = match (&input.x, &input.w, &input.pair) {
        (Some(xp), Some(wp), _) => {
            doc.set("x", xp.display()).set("w", wp.display()).set("header", input.header);
            (io::read_dense_csv(xp, input.header)?, io::read_dense_csv(wp, input.header)?)
        }
        (None, None, Some(pair)) => {
            let data_seed = input.data_seed.unwrap_or(seed);
            doc.set("pair", format!("{}-{}", pair.x, pair.w))
                .set("d", input.d)
                .set("n", input.n)
                .set("data_seed", data_seed)
                .set("spectrum", format!("{:?}", input.spectrum).to_lowercase());
            let (mut sx, mut sw) = pair.specs(input.d, input.n, data_seed);
            sx.spectrum = input.spectrum;
            sw.spectrum = input.spectrum;
            (generate(&sx)?, generate(&sw)?)
        }
        _ => return Err(Error::Configuration("give --x and --w, or --pair".into())),
    };
    let orientation = match input.orientation {
        Orientation::Data => "data",
        Orientation::Feature => "feature",
    };
    doc.set("orientation", orientation);
    let (x, w) = match input.orientation {
        Orientation::Data => (x, w),
        Orientation::Feature => (x.transpose(), w.transpose()),
    };
    if x.n_cols() != w.n_cols() {
        return Err(Error::dim(
            "load_pair",
            format!("X has {} columns but W has {} ({orientation} orientation)", x.n_cols(), w.n_cols()),
        ));
    }
    Ok((x, w))
}

fn cmd_fmm_bench(args: &FmmArgs) -> Result<Output> {
    let mut doc = ResultsDocument::new("fmm-bench");
    let (x, w) = load_pair(&args.input, args.seed, &mut doc)?;
    doc.set("ks", join(&args.ks))
        .set("methods", join(&args.methods))
        .set("projection", args.projection)
        .set("trials", args.trials)
        .set("seed", args.seed)
        .set("floor", format!("{:?}", args.floor));
    if let Some(m) = args.moment_rows {
        doc.set("moment_rows", m);
    }
    let methods = args.methods.iter().map(|&m| FmmMethod::new(m, args.projection)).collect();
    let mut cfg = BenchmarkConfig::new(methods, args.ks.clone(), args.trials, args.seed);
    cfg.moment_rows = args.moment_rows;
    cfg.floor = args.floor;
    let stats = run_benchmark(&x, &w, &cfg)?;
    if let Some(path) = &args.csv {
        write_text(path, &io::trial_stats_csv(&stats))?;
    }
    doc.results = stats.iter().map(|s| ResultEntry::TrialStats(TrialStatsRecord::from(s))).collect();
    Ok(Output::Document(doc, args.out.clone()))
}

fn cmd_phi_report(args: &PhiArgs) -> Result<Output> {
    let mut doc = ResultsDocument::new("phi-report");
    let (x, w) = load_pair(&args.input, args.seed, &mut doc)?;
    doc.set("floor", format!("{:?}", args.floor)).set("seed", args.seed);
    let sx = estimate_full(&x.clone().into())?;
    let sw = estimate_full(&w.clone().into())?;
    let optimal = build_optimal_detailed(&sx, &sw, args.floor)?;
    if optimal.clamped > 0 {
        doc.warnings.push(format!(
            "degenerate covariance: {} eigenvalues raised to the floor {:e} times the largest",
            optimal.clamped, args.floor
        ));
    }
    let report = phi_report(&sx, &sw, args.floor)?;
    let mut record = PhiRecord::from(&report);
    if let Some(trials) = args.mc_trials {
        doc.set("mc_trials", trials);
        let quick = build_quick(sx.diag(), sw.diag(), DEFAULT_EPS)?;
        let (px, pw) = (VectorSampler::Rows(x), VectorSampler::Rows(w));
        let mc = |p: &Preprocessor, stream: u64| phi_monte_carlo(p, &px, &pw, trials, mix_seed(args.seed, stream));
        record.mc_identity = Some(mc(&Preprocessor::Identity, 0)?);
        record.mc_quick = Some(mc(&quick, 1)?);
        record.mc_optimal = Some(mc(&optimal.preprocessor, 2)?);
        record.mc_trials = Some(trials);
    }
    if let Some(path) = &args.csv {
        write_text(path, &io::phi_csv(&report))?;
    }
    doc.results.push(ResultEntry::Phi(record));
    Ok(Output::Document(doc, args.out.clone()))
}

fn load_labeled(path: &Path, args: &LearnArgs) -> Result<LabeledDataset> {
    match args.format {
        DataFormat::Csv => io::read_labeled_csv(path, args.header, args.label_column),
        DataFormat::Libsvm => io::read_libsvm(path, args.dim),
    }
}

fn cmd_learn(args: &LearnArgs, loss: Loss, command: &str) -> Result<Output> {
    let mut doc = ResultsDocument::new(command);
    doc.set("train", args.train.display())
        .set("format", format!("{:?}", args.format).to_lowercase())
        .set("header", args.header);
    let full = load_labeled(&args.train, args)?;
    let (train, test) = match &args.test {
        Some(path) => {
            doc.set("test", path.display());
            let test = load_labeled(path, args)?;
            // libsvm files may not reach the same largest index.
            if args.format == DataFormat::Libsvm && args.dim.is_none() && test.n_cols() != full.n_cols() {
                let d = full.n_cols().max(test.n_cols());
                return Err(Error::Configuration(format!(
                    "train and test have {} and {} features; pin them with --dim {d}",
                    full.n_cols(),
                    test.n_cols()
                )));
            }
            (full, test)
        }
        None => {
            if !(args.split > 0.0 && args.split < 1.0) {
                return Err(Error::Configuration(format!("--split must lie in (0, 1), got {}", args.split)));
            }
            doc.set("split", format!("{:?}", args.split));
            let at = (full.n_rows() as f64 * args.split).round() as usize;
            full.split_at(at)?
        }
    };
    if let Some(c) = args.label_column {
        doc.set("label_column", c);
    }
    if let Some(d) = args.dim {
        doc.set("dim", d);
    }
    doc.set("lambdas", join_reals(&args.lambdas))
        .set("ks", join(&args.ks))
        .set("trials", args.trials)
        .set("ridge", format!("{:?}", args.ridge))
        .set("seed", args.seed)
        .set("projection", args.projection)
        .set("train_rows", train.n_rows())
        .set("test_rows", test.n_rows());
    let mut cfg = SweepConfig::new(args.lambdas.clone(), args.ks.clone(), args.trials, loss, args.seed);
    cfg.ridge = args.ridge;
    cfg.projection_kind = args.projection;
    if loss == Loss::Logistic {
        doc.set("epochs", args.epochs);
        if let Some(s) = args.step {
            doc.set("step", format!("{s:?}"));
        }
        cfg.logistic = LogisticOptions {
            epochs: args.epochs,
            step: args.step,
            ridge: args.ridge,
        };
    }
    let result = learn::sweep(&train, &test, &cfg)?;
    if let Some(path) = &args.csv {
        write_text(path, &io::sweep_table_csv(&result))?;
    }
    doc.results = result
        .cells
        .iter()
        .map(|c| {
            ResultEntry::SweepCell(SweepCellRecord {
                metric: result.metric,
                lambda: c.lambda,
                k: c.k,
                trials: c.trials,
                mean: c.mean,
                std: c.std,
            })
        })
        .collect();
    if args.joint {
        doc.set("joint_epochs", args.joint_epochs)
            .set("lambda_step", format!("{:?}", args.lambda_step));
        let opts = JointOptions {
            epochs: args.joint_epochs,
            step_lambda: args.lambda_step,
            ridge: args.ridge,
            ..JointOptions::default()
        };
        for &k in &args.ks {
            let spec = ProjectionSpec::new(args.seed, train.n_cols(), k, args.projection)?;
            let (model, history) = learn::joint_train_with_history(&train, &spec, loss, &opts)?;
            let preds = model.predict(&test.features)?;
            doc.results.push(ResultEntry::JointFit(JointFitRecord {
                k,
                seed: args.seed,
                lambda: model.lambda,
                train_objective: *history.last().expect("history starts with the initial loss"),
                metric: result.metric,
                test_metric: learn::evaluate(result.metric, &preds, &test.labels),
                epochs: history.len() - 1,
            }));
        }
    }
    Ok(Output::Document(doc, args.out.clone()))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| -> f64 { StandardNormal.sample(rng) }).collect()
}

fn cmd_variance_check(args: &VarianceArgs) -> Result<Output> {
    let mut doc = ResultsDocument::new("variance-check");
    doc.set("d", args.d)
        .set("ks", join(&args.ks))
        .set("trials", args.trials)
        .set("pairs", args.pairs)
        .set("seed", args.seed)
        .set("projection", ProjectionKind::SignScaled);
    for p in 0..args.pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(args.seed, p as u64));
        let x = gaussian_vec(&mut rng, args.d);
        let w = gaussian_vec(&mut rng, args.d);
        let ip = dot(&x, &w);
        for &k in &args.ks {
            let base = ProjectionSpec::new(mix_seed(mix_seed(args.seed, p as u64), k as u64), args.d, k, ProjectionKind::SignScaled)?;
            let (mean, var) = inner_product_mc(&x, &w, &base, args.trials)?;
            let exact = sign_variance_exact(&x, &w, k)?;
            let bound = variance_bound(&x, &w, k, ProjectionKind::SignScaled.variance_constant());
            let rel = (var - exact).abs() / exact;
            let z = (mean - ip).abs() / (exact / args.trials as f64).sqrt();
            doc.results.push(ResultEntry::VarianceCheck(VarianceCheckRecord {
                pair: p,
                k,
                trials: args.trials,
                inner_product: ip,
                mc_mean: mean,
                mc_variance: var,
                exact_variance: exact,
                bound,
                variance_rel_error: rel,
                mean_z: z,
                passed: rel <= VARIANCE_REL_TOL && z <= MEAN_Z_TOL && exact <= bound,
            }));
        }
    }
    Ok(Output::Document(doc, args.out.clone()))
}

fn execute(command: &Command) -> Result<Output> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::FmmBench(a) => cmd_fmm_bench(a),
        Command::PhiReport(a) => cmd_phi_report(a),
        Command::Regress(a) => cmd_learn(a, Loss::Squared, "regress"),
        Command::Classify(a) => cmd_learn(a, Loss::Logistic, "classify"),
        Command::VarianceCheck(a) => cmd_variance_check(a),
    }
}

fn run_parsed(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let pool = match cli.threads {
        Some(0) => return Err(Error::Configuration("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Configuration(format!("cannot start thread pool: {e}")))?;
    let text = match pool.install(|| execute(&cli.command))? {
        Output::Text(t) => t,
        Output::Document(doc, path) => {
            let json = doc.to_json()?;
            match path {
                Some(p) => return write_text(&p, &json),
                None => json,
            }
        }
    };
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a failed
/// run, 2 on a usage error. Failures print one JSON line to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(stdout, "{}", e.render());
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(stderr, "{}", error_line("usage", message.trim_start_matches("error: ")));
            return 2;
        }
    };
    match run_parsed(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}
