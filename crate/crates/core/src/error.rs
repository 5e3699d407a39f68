use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("segment plan error: {0}")]
    Plan(String),
    #[error("index {index} out of range {range}")]
    Index { index: usize, range: String },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("bound unavailable: {0}")]
    UnsupportedBound(String),
    #[error("boundary mode unsupported: {0}")]
    UnsupportedMode(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("certificate error: {0}")]
    Certificate(String),
    #[error("solver diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
    #[error("segment solves failed: {}", format_segments(.0))]
    SegmentFailures(Vec<(usize, String)>),
    #[error("division by zero: {0}")]
    Division(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_segments(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .map(|(k, msg)| format!("segment {k}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
