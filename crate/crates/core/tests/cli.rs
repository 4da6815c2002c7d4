use std::path::{Path, PathBuf};
use std::process::Command;

use ddrp::cli::run;
use ddrp::io::{self, ResultEntry, ResultsDocument};
use ddrp::learn::{self, heteroscedastic_regression, two_cluster_classification, LabeledDataset};
use ddrp::linalg::DenseMatrix;
use ddrp::numeric::mean_and_variance;
use ddrp::rp::{project_rows, sample_projection, ProjectionKind, ProjectionSpec};
use ddrp::synth::{generate, SyntheticKind, SyntheticSpec};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn ddrp(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("ddrp").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let o = ddrp(args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.stdout
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_labeled(path: &Path, ds: &LabeledDataset) {
    let x = ds.features.to_dense();
    let m = DenseMatrix::from_fn(x.n_rows(), x.n_cols() + 1, |i, j| {
        if j < x.n_cols() {
            x[(i, j)]
        } else {
            ds.labels[i]
        }
    });
    io::write_dense_csv(path, &m).unwrap();
}

#[test]
fn synth_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, d, n, seed, name) in [
        ("diag", "4", "5", "0", "synth_diag_d4_n5_s0.csv"),
        ("uniform", "4", "5", "1", "synth_uniform_d4_n5_s1.csv"),
        ("unifskew", "3", "4", "2", "synth_unifskew_d3_n4_s2.csv"),
    ] {
        let out = dir.path().join(name);
        ok(&["synth", "--kind", kind, "--d", d, "--n", n, "--seed", seed, "--out", p(&out)]);
        let want = std::fs::read(golden(name)).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), want, "{name}");
        // Stdout mode writes the same bytes.
        let printed = ok(&["synth", "--kind", kind, "--d", d, "--n", n, "--seed", seed]);
        assert_eq!(printed.as_bytes(), want.as_slice());
    }
}

#[test]
fn synth_output_matches_library_generator() {
    let text = ok(&["synth", "--kind", "uniform", "--d", "6", "--n", "9", "--seed", "4"]);
    let parsed = io::parse_dense_csv(text.as_bytes(), false).unwrap();
    let want = generate(&SyntheticSpec::new(SyntheticKind::Uniform, 6, 9, 4)).unwrap();
    assert_eq!(parsed, want);
}

#[test]
fn synth_pair_uses_consecutive_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, wp) = (dir.path().join("x.csv"), dir.path().join("w.csv"));
    ok(&["synth", "--pair", "uniform-diag", "--d", "5", "--n", "7", "--seed", "10", "--out", p(&xp), "--out-w", p(&wp)]);
    let x = io::read_dense_csv(&xp, false).unwrap();
    let w = io::read_dense_csv(&wp, false).unwrap();
    assert_eq!(x, generate(&SyntheticSpec::new(SyntheticKind::Uniform, 5, 7, 10)).unwrap());
    assert_eq!(w, generate(&SyntheticSpec::new(SyntheticKind::Diag, 5, 7, 11)).unwrap());

    let o = ddrp(&["synth", "--pair", "uniform-diag", "--d", "5", "--n", "7", "--out", p(&xp)]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("\"configuration\""));
}

#[test]
fn phi_report_reproduces_the_diagonal_example() {
    // Balanced sign patterns force Sigma_X = diag(4, 1) and Sigma_W = I exactly.
    let dir = tempfile::tempdir().unwrap();
    let (xp, wp) = (dir.path().join("x.csv"), dir.path().join("w.csv"));
    std::fs::write(&xp, "2,1\n2,-1\n-2,1\n-2,-1\n").unwrap();
    std::fs::write(&wp, "1,1\n1,-1\n-1,1\n-1,-1\n").unwrap();
    let doc = ResultsDocument::from_json(&ok(&["phi-report", "--x", p(&xp), "--w", p(&wp), "--mc-trials", "20000"])).unwrap();
    assert!(doc.warnings.is_empty());
    let ResultEntry::Phi(r) = &doc.results[0] else { panic!() };
    assert!((r.phi_identity - 10.0).abs() < 1e-12);
    assert!((r.phi_quick - 9.0).abs() < 1e-12);
    assert!((r.phi_optimal - 9.0).abs() < 1e-12);
    assert!((r.optimal_lower_bound - 9.0).abs() < 1e-12);
    // |x|^2 |w|^2 is constant over the rows here, so sampling is exact.
    assert!((r.mc_identity.unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(r.mc_trials, Some(20000));
}

#[test]
fn phi_report_warns_on_degenerate_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, wp) = (dir.path().join("x.csv"), dir.path().join("w.csv"));
    std::fs::write(&xp, "1,0\n-1,0\n").unwrap();
    std::fs::write(&wp, "1,1\n1,-1\n").unwrap();
    let doc = ResultsDocument::from_json(&ok(&["phi-report", "--x", p(&xp), "--w", p(&wp)])).unwrap();
    assert_eq!(doc.warnings.len(), 1);
    assert!(doc.warnings[0].contains("degenerate"));
}

#[test]
fn fmm_bench_matches_library_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let x = generate(&SyntheticSpec::new(SyntheticKind::Diag, 12, 40, 3)).unwrap();
    let w = generate(&SyntheticSpec::new(SyntheticKind::Uniform, 12, 30, 4)).unwrap();
    let (xp, wp, cp) = (dir.path().join("x.csv"), dir.path().join("w.csv"), dir.path().join("s.csv"));
    io::write_dense_csv(&xp, &x).unwrap();
    io::write_dense_csv(&wp, &w).unwrap();
    let text = ok(&["fmm-bench", "--x", p(&xp), "--w", p(&wp), "--ks", "2,6", "--trials", "8", "--seed", "5", "--csv", p(&cp)]);
    let doc = ResultsDocument::from_json(&text).unwrap();

    use ddrp::fmm::{run_benchmark, BenchmarkConfig, FmmMethod, MethodKind};
    let methods = [MethodKind::Oblivious, MethodKind::Quick, MethodKind::Optimal]
        .map(|m| FmmMethod::new(m, ProjectionKind::SignScaled))
        .to_vec();
    let stats = run_benchmark(&x, &w, &BenchmarkConfig::new(methods, vec![2, 6], 8, 5)).unwrap();
    let want: Vec<ResultEntry> = stats.iter().map(|s| ResultEntry::TrialStats(s.into())).collect();
    assert_eq!(doc.results, want);
    assert_eq!(std::fs::read_to_string(&cp).unwrap(), io::trial_stats_csv(&stats));
}

#[test]
fn fmm_bench_feature_orientation_transposes() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, wp) = (dir.path().join("x.csv"), dir.path().join("w.csv"));
    // 6x4 and 5x4: compatible as data, not as features.
    io::write_dense_csv(&xp, &DenseMatrix::from_fn(6, 4, |i, j| (i + 2 * j) as f64 - 3.0)).unwrap();
    io::write_dense_csv(&wp, &DenseMatrix::from_fn(5, 4, |i, j| (i * j) as f64 - 1.0)).unwrap();
    let base = ["fmm-bench", "--x", p(&xp), "--w", p(&wp), "--ks", "2", "--trials", "4", "--methods", "oblivious,quick"];
    ok(&base);
    let o = ddrp(&[&base[..], &["--orientation", "feature"]].concat());
    assert_eq!(o.code, 1);
    let err: serde_json::Value = serde_json::from_str(o.stderr.trim()).unwrap();
    assert_eq!(err["error"]["kind"], "dimension");
    assert_eq!(o.stderr.lines().count(), 1);

    io::write_dense_csv(&wp, &DenseMatrix::from_fn(6, 5, |i, j| (i * j) as f64 - 1.0)).unwrap();
    let doc = ResultsDocument::from_json(&ok(&["fmm-bench", "--x", p(&xp), "--w", p(&wp), "--ks", "3", "--trials", "4", "--orientation", "feature"])).unwrap();
    assert_eq!(doc.config["orientation"], "feature");
    assert_eq!(doc.results.len(), 3);
}

#[test]
fn regress_lambda_zero_is_the_oblivious_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let ds = heteroscedastic_regression(15, 60, 2).unwrap();
    let (train, test) = ds.split_at(45).unwrap();
    let (tp, sp) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    write_labeled(&tp, &train);
    write_labeled(&sp, &test);
    let doc = ResultsDocument::from_json(&ok(&["regress", "--train", p(&tp), "--test", p(&sp), "--ks", "5", "--trials", "6", "--seed", "9"])).unwrap();
    let ResultEntry::SweepCell(cell) = &doc.results[0] else { panic!() };

    // Plain projected ridge regression, assembled by hand.
    let mses: Vec<f64> = (0..6u64)
        .map(|t| {
            let r = sample_projection(&ProjectionSpec::new(9 + t, 15, 5, ProjectionKind::SignScaled).unwrap()).unwrap();
            let z = project_rows(&train.features, &r).unwrap();
            let w = learn::train_linear(&z, &train.labels, learn::DEFAULT_RIDGE).unwrap();
            let preds = project_rows(&test.features, &r).unwrap().mul_vec(&w).unwrap();
            learn::evaluate(learn::Metric::Mse, &preds, &test.labels)
        })
        .collect();
    let (mean, var) = mean_and_variance(&mses);
    assert_eq!(cell.mean, mean);
    assert_eq!(cell.std, var.sqrt());
}

#[test]
fn regress_split_table_csv_and_joint_fit() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("data.csv");
    let cp = dir.path().join("table.csv");
    write_labeled(&tp, &heteroscedastic_regression(20, 100, 1).unwrap());
    let text = ok(&[
        "regress", "--train", p(&tp), "--lambdas", "-0.5,0,1", "--ks", "4,8", "--trials", "5", "--csv", p(&cp), "--joint",
        "--joint-epochs", "20",
    ]);
    let doc = ResultsDocument::from_json(&text).unwrap();
    assert_eq!(doc.config["train_rows"], "80");
    assert_eq!(doc.config["lambdas"], "-0.5,0.0,1.0");
    let cells = doc.results.iter().filter(|r| matches!(r, ResultEntry::SweepCell(_))).count();
    let joints = doc.results.iter().filter(|r| matches!(r, ResultEntry::JointFit(_))).count();
    assert_eq!((cells, joints), (6, 2));
    let table = std::fs::read_to_string(&cp).unwrap();
    assert_eq!(table.lines().next().unwrap(), "lambda,mean_k4,std_k4,mean_k8,std_k8");
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn classify_separable_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("data.csv");
    write_labeled(&tp, &two_cluster_classification(50, 500, 6.0, 3).unwrap());
    let doc = ResultsDocument::from_json(&ok(&["classify", "--train", p(&tp), "--ks", "20,40", "--trials", "5"])).unwrap();
    for r in &doc.results {
        let ResultEntry::SweepCell(c) = r else { panic!() };
        assert!(c.mean >= 0.95, "k={} accuracy {}", c.k, c.mean);
    }
}

#[test]
fn classify_rejects_non_binary_labels() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("data.csv");
    write_labeled(&tp, &heteroscedastic_regression(5, 20, 1).unwrap());
    let o = ddrp(&["classify", "--train", p(&tp), "--ks", "2", "--trials", "3"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("\"labels\""));
}

#[test]
fn classify_reads_libsvm() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("data.svm");
    io::write_libsvm(&tp, &two_cluster_classification(10, 200, 5.0, 8).unwrap()).unwrap();
    let doc = ResultsDocument::from_json(&ok(&[
        "classify", "--train", p(&tp), "--format", "libsvm", "--dim", "10", "--ks", "5", "--trials", "3",
    ]))
    .unwrap();
    assert_eq!(doc.results.len(), 1);
}

#[test]
fn variance_check_small_run_passes() {
    let doc = ResultsDocument::from_json(&ok(&["variance-check", "--d", "10", "--ks", "2,5", "--trials", "40000", "--pairs", "3"])).unwrap();
    assert_eq!(doc.results.len(), 6);
    for r in &doc.results {
        let ResultEntry::VarianceCheck(v) = r else { panic!() };
        assert!(v.passed, "{v:?}");
    }
}

#[test]
fn usage_errors_and_help() {
    let o = ddrp(&["fmm-bench", "--pair", "diag-diag", "--bogus"]);
    assert_eq!(o.code, 2);
    let err: serde_json::Value = serde_json::from_str(o.stderr.trim()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    assert_eq!(ddrp(&["--help"]).code, 0);
    assert_eq!(ddrp(&["--version"]).code, 0);
    assert_eq!(ddrp(&["regress", "--train", "x.csv", "--ks", "2", "--threads", "0"]).code, 1);
}

#[test]
fn writes_document_to_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("doc.json");
    let printed = ok(&["variance-check", "--d", "4", "--ks", "1", "--trials", "100", "--pairs", "1"]);
    assert_eq!(ok(&["variance-check", "--d", "4", "--ks", "1", "--trials", "100", "--pairs", "1", "--out", p(&out)]), "");
    assert_eq!(std::fs::read_to_string(&out).unwrap(), printed);
    assert_eq!(io::read_results(&out).unwrap().command, "variance-check");
}

#[test]
fn binary_honours_thread_env_and_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ddrp");
    let args = ["fmm-bench", "--pair", "uniform-diag", "--d", "10", "--n", "30", "--ks", "2,4", "--trials", "12"];
    let run_with = |threads: &str| Command::new(bin).args(args).env("DDRP_THREADS", threads).output().unwrap();
    let one = run_with("1");
    let eight = run_with("8");
    assert!(one.status.success());
    assert_eq!(one.stdout, eight.stdout);
    assert!(!String::from_utf8_lossy(&one.stdout).contains("threads"));

    let bad = Command::new(bin).args(["phi-report"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let missing = Command::new(bin).args(["phi-report", "--x", "/no/such", "--w", "/no/such"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let line = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(line.lines().count(), 1);
    assert!(line.contains("\"io\""));
}
