use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("{op} did not converge after {sweeps} sweeps")]
    Convergence { op: &'static str, sweeps: usize },

    #[error("degenerate covariance: largest eigenvalue is {lambda_max:e}")]
    DegenerateCovariance { lambda_max: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {min_eigenvalue:e} vs largest {lambda_max:e}")]
    NotPsd { min_eigenvalue: f64, lambda_max: f64 },

    #[error("singular factor: eigenvalue {value:e} at index {index} is below the floor {floor:e}; increase the eigenvalue floor to regularize")]
    Singular { index: usize, value: f64, floor: f64 },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("invalid labels: {0}")]
    Labels(String),

    #[error("step size error: {0}")]
    StepSize(String),

    #[error("phi ordering violated: {0}")]
    PhiOrdering(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema version mismatch: found {found:?}, expected {expected:?}")]
    Schema { found: String, expected: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::NotSymmetric { .. } => "symmetry",
            Error::Convergence { .. } => "convergence",
            Error::DegenerateCovariance { .. } => "degenerate-covariance",
            Error::NotPsd { .. } => "not-psd",
            Error::Singular { .. } => "singular",
            Error::EmptyData(_) => "empty-data",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Configuration(_) => "configuration",
            Error::Labels(_) => "labels",
            Error::StepSize(_) => "step-size",
            Error::PhiOrdering(_) => "phi-ordering",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
