//! Dense CSV and libsvm ingestion, plus versioned JSON results documents and
//! plot-ready CSV.
//!
//! libsvm feature indices are 1-based on disk and 0-based in memory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::fmm::{MethodKind, TrialStats};
use crate::learn::{LabeledDataset, Metric, SweepResult};
use crate::linalg::{CsrMatrix, DataMatrix, DenseMatrix};
use crate::preprocess::PhiReport;
use crate::rp::ProjectionKind;

pub const SCHEMA_VERSION: &str = "1";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn parse_real(cell: &str, line: u64) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value {cell:?}"),
        });
    }
    Ok(v)
}

/// Rows of a rectangular numeric CSV, each paired with its line number.
fn parse_csv_rows<R: Read>(reader: R, has_header: bool) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record.iter().map(|c| parse_real(c, line)).collect::<Result<Vec<f64>>>()?;
        if let Some((_, first)) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(Error::EmptyData("CSV has no data rows".into()));
    }
    Ok(rows)
}

pub fn parse_dense_csv<R: Read>(reader: R, has_header: bool) -> Result<DenseMatrix> {
    let rows = parse_csv_rows(reader, has_header)?;
    let cols = rows[0].1.len();
    let n = rows.len();
    let data = rows.into_iter().flat_map(|(_, r)| r).collect();
    DenseMatrix::new(n, cols, data)
}

/// Like [`parse_dense_csv`] but pulls one column out as labels; `None` means
/// the last column.
pub fn parse_labeled_csv<R: Read>(reader: R, has_header: bool, label_column: Option<usize>) -> Result<LabeledDataset> {
    let rows = parse_csv_rows(reader, has_header)?;
    let width = rows[0].1.len();
    let label_col = label_column.unwrap_or(width.saturating_sub(1));
    if width < 2 || label_col >= width {
        return Err(Error::Parse {
            line: rows[0].0,
            message: format!("label column {label_col} unusable with {width} fields"),
        });
    }
    let mut labels = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * (width - 1));
    for (_, mut r) in rows {
        labels.push(r.remove(label_col));
        data.extend(r);
    }
    let features = DenseMatrix::new(labels.len(), width - 1, data)?;
    LabeledDataset::new(features.into(), labels)
}

pub fn read_dense_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DenseMatrix> {
    parse_dense_csv(open(path.as_ref())?, has_header)
}

pub fn read_labeled_csv(path: impl AsRef<Path>, has_header: bool, label_column: Option<usize>) -> Result<LabeledDataset> {
    parse_labeled_csv(open(path.as_ref())?, has_header, label_column)
}

/// One row per line, values in Rust's shortest round-trip notation.
pub fn format_dense_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.n_rows() * m.n_cols() * 20);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dense_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_file(path.as_ref(), &format_dense_csv(m))
}

/// Parses `label idx:val ...` lines. Blank lines and `#` comments are skipped.
/// The dimension is the largest index seen unless `dim` pins it.
pub fn parse_libsvm<R: Read>(reader: R, dim: Option<usize>) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    let mut offsets = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut max_index = 0usize;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = parse_real(tokens.next().unwrap_or_default(), line_no)?;
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("index {idx} is not greater than the previous index"),
                });
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("index {idx} exceeds the dimension {d}"),
                    });
                }
            }
            prev = Some(idx);
            max_index = max_index.max(idx);
            cols.push(idx - 1);
            vals.push(parse_real(val, line_no)?);
        }
        labels.push(label);
        offsets.push(cols.len());
    }
    if labels.is_empty() {
        return Err(Error::EmptyData("libsvm input has no rows".into()));
    }
    let n_cols = dim.unwrap_or(max_index);
    let m = CsrMatrix::new(labels.len(), n_cols, offsets, cols, vals)?;
    LabeledDataset::new(m.into(), labels)
}

pub fn read_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<LabeledDataset> {
    parse_libsvm(open(path.as_ref())?, dim)
}

/// Writes stored entries of sparse features, or nonzeros of dense ones.
pub fn format_libsvm(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    let sparse = match &ds.features {
        DataMatrix::Sparse(s) => s.clone(),
        DataMatrix::Dense(d) => CsrMatrix::from_dense(d),
    };
    for (i, label) in ds.labels.iter().enumerate() {
        let _ = write!(out, "{label}");
        let (c, v) = sparse.row(i);
        for (&ci, &vi) in c.iter().zip(v) {
            let _ = write!(out, " {}:{vi:?}", ci + 1);
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    write_file(path.as_ref(), &format_libsvm(ds))
}

/// Serializes a real with 17 significant digits.
fn real17<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if !v.is_finite() {
        return Err(serde::ser::Error::custom(format!("cannot serialize non-finite value {v}")));
    }
    let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

fn real17_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => real17(x, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStatsRecord {
    pub method: MethodKind,
    pub projection: ProjectionKind,
    pub k: usize,
    pub trials: usize,
    #[serde(serialize_with = "real17")]
    pub mean_sq_error: f64,
    #[serde(serialize_with = "real17")]
    pub std_sq_error: f64,
    #[serde(serialize_with = "real17")]
    pub sem_sq_error: f64,
}

impl From<&TrialStats> for TrialStatsRecord {
    fn from(t: &TrialStats) -> Self {
        Self {
            method: t.method.kind,
            projection: t.method.projection_kind,
            k: t.k,
            trials: t.trials,
            mean_sq_error: t.mean_sq_error,
            std_sq_error: t.std_sq_error,
            sem_sq_error: t.sem_sq_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCellRecord {
    pub metric: Metric,
    #[serde(serialize_with = "real17")]
    pub lambda: f64,
    pub k: usize,
    pub trials: usize,
    #[serde(serialize_with = "real17")]
    pub mean: f64,
    #[serde(serialize_with = "real17")]
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiRecord {
    #[serde(serialize_with = "real17")]
    pub phi_identity: f64,
    #[serde(serialize_with = "real17")]
    pub phi_quick: f64,
    #[serde(serialize_with = "real17")]
    pub phi_optimal: f64,
    #[serde(serialize_with = "real17")]
    pub optimal_lower_bound: f64,
    #[serde(default, serialize_with = "real17_opt", skip_serializing_if = "Option::is_none")]
    pub mc_identity: Option<f64>,
    #[serde(default, serialize_with = "real17_opt", skip_serializing_if = "Option::is_none")]
    pub mc_quick: Option<f64>,
    #[serde(default, serialize_with = "real17_opt", skip_serializing_if = "Option::is_none")]
    pub mc_optimal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_trials: Option<usize>,
}

impl From<&PhiReport> for PhiRecord {
    fn from(r: &PhiReport) -> Self {
        Self {
            phi_identity: r.phi_identity,
            phi_quick: r.phi_quick,
            phi_optimal: r.phi_optimal,
            optimal_lower_bound: r.optimal_lower_bound,
            mc_identity: None,
            mc_quick: None,
            mc_optimal: None,
            mc_trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheckRecord {
    pub pair: usize,
    pub k: usize,
    pub trials: usize,
    #[serde(serialize_with = "real17")]
    pub inner_product: f64,
    #[serde(serialize_with = "real17")]
    pub mc_mean: f64,
    #[serde(serialize_with = "real17")]
    pub mc_variance: f64,
    #[serde(serialize_with = "real17")]
    pub exact_variance: f64,
    #[serde(serialize_with = "real17")]
    pub bound: f64,
    #[serde(serialize_with = "real17")]
    pub variance_rel_error: f64,
    /// `|mc_mean - inner_product|` in standard errors.
    #[serde(serialize_with = "real17")]
    pub mean_z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFitRecord {
    pub k: usize,
    pub seed: u64,
    #[serde(serialize_with = "real17")]
    pub lambda: f64,
    #[serde(serialize_with = "real17")]
    pub train_objective: f64,
    pub metric: Metric,
    #[serde(serialize_with = "real17")]
    pub test_metric: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultEntry {
    TrialStats(TrialStatsRecord),
    SweepCell(SweepCellRecord),
    Phi(PhiRecord),
    VarianceCheck(VarianceCheckRecord),
    JointFit(JointFitRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema_version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub results: Vec<ResultEntry>,
}

impl ResultsDocument {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.into(),
            config: BTreeMap::new(),
            warnings: Vec::new(),
            results: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>")
            .to_string();
        if found != SCHEMA_VERSION {
            return Err(Error::Schema {
                found,
                expected: SCHEMA_VERSION.to_string(),
            });
        }
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_results(doc: &ResultsDocument, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &doc.to_json()?)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<ResultsDocument> {
    let path = path.as_ref();
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    ResultsDocument::from_json(&text)
}

/// `method,k,trials,mean,std` with one row per (method, k).
pub fn trial_stats_csv(stats: &[TrialStats]) -> String {
    let mut out = String::from("method,k,trials,mean,std\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e}",
            s.method.kind, s.k, s.trials, s.mean_sq_error, s.std_sq_error
        );
    }
    out
}

/// `lambda,k,trials,mean,std` with one row per cell.
pub fn sweep_long_csv(res: &SweepResult) -> String {
    let mut out = String::from("lambda,k,trials,mean,std\n");
    for c in &res.cells {
        let _ = writeln!(out, "{:?},{},{},{:.16e},{:.16e}", c.lambda, c.k, c.trials, c.mean, c.std);
    }
    out
}

/// One row per lambda with a mean and std column for every k.
pub fn sweep_table_csv(res: &SweepResult) -> String {
    let mut lambdas: Vec<f64> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for c in &res.cells {
        if !lambdas.contains(&c.lambda) {
            lambdas.push(c.lambda);
        }
        if !ks.contains(&c.k) {
            ks.push(c.k);
        }
    }
    let mut out = String::from("lambda");
    for k in &ks {
        let _ = write!(out, ",mean_k{k},std_k{k}");
    }
    out.push('\n');
    for &l in &lambdas {
        let _ = write!(out, "{l:?}");
        for &k in &ks {
            match res.cell(l, k) {
                Some(c) => {
                    let _ = write!(out, ",{:.16e},{:.16e}", c.mean, c.std);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// `quantity,value` rows for the four Phi values.
pub fn phi_csv(r: &PhiReport) -> String {
    format!(
        "quantity,value\nidentity,{:.16e}\nquick,{:.16e}\noptimal,{:.16e}\noptimal_lower_bound,{:.16e}\n",
        r.phi_identity, r.phi_quick, r.phi_optimal, r.optimal_lower_bound
    )
}
