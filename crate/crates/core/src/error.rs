use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient beats: found {found} peaks, need at least {needed}")]
    InsufficientBeats { found: usize, needed: usize },

    #[error("degenerate beat: {0}")]
    DegenerateBeat(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("no threshold reaches {target} > 0.8 (best achievable {best:.4} at threshold {threshold})")]
    NoThreshold {
        target: String,
        best: f64,
        threshold: f64,
    },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("segment {segment_id}: {reason}")]
    Segment { segment_id: String, reason: String },

    #[error("missing ids ({}): {}", .0.len(), .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("duplicate ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn segment(id: &str, reason: impl Into<String>) -> Self {
        Error::Segment {
            segment_id: id.to_string(),
            reason: reason.into(),
        }
    }
}
