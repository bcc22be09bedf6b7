use std::path::PathBuf;

/// Errors surfaced by the panel and model pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate covariate `{0}` has zero variance")]
    DegenerateCovariate(String),

    #[error("no wallets survive the activity threshold ({below_threshold} wallets all below {threshold} transfers)")]
    EmptyPanel { below_threshold: usize, threshold: usize },

    #[error("stream {0} is all zero; nothing to fit")]
    DegenerateStream(String),

    #[error("non-finite linear predictor at wallet {wallet}, day {day}")]
    NonFinitePredictor { wallet: usize, day: usize },

    #[error("natural cubic basis requires df >= 3 (got {0})")]
    BasisDf(usize),

    #[error("basis needs n_days > df (got n_days {n_days}, df {df})")]
    BasisGrid { n_days: usize, df: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model did not converge: {0}")]
    NonConvergence(String),

    #[error("bootstrap instability: {failed} failed refits exceed the replicate budget ({budget})")]
    BootstrapInstability { failed: usize, budget: usize },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
