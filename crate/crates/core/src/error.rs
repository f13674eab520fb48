use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GrapeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GrapeError {
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("non-finite score {value} at index {index}")]
    ScoreError { index: usize, value: f64 },

    #[error("divergence undefined: p[{index}] > 0 but q[{index}] = 0")]
    DivergenceUndefined { index: usize },

    #[error("loss {value} is below the floor {floor}")]
    DegenerateLoss { value: f64, floor: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset{}", .0.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    EmptyDataset(Option<PathBuf>),

    #[error("{path}:{line}: {message}")]
    IngestError {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid Markov specification: {0}")]
    SpecError(String),

    #[error("example kind not supported by {model}: {detail}")]
    IncompatibleExample { model: &'static str, detail: String },

    #[error("numerical divergence at step {step}: {detail}")]
    NumericalDivergence { step: u64, detail: String },

    #[error("config error: {0}")]
    ConfigError(String),

    #[error("report error: {0}")]
    ReportError(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl GrapeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GrapeError::Io {
            path: path.into(),
            source,
        }
    }
}
