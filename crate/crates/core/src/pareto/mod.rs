//! Accuracy/token-cost analytics over benchmark evaluation records.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

mod front;
mod phase;
mod records;
mod report;
mod summary;

pub use front::{dominates, pareto_front, pareto_improvements, Improvement};
pub use phase::{detect_phase_change, PhaseChangeReport, StepDifference};
pub use records::{ingest_records, parse_records, EvalRecord, Trial};
pub use report::{
    analyze, write_report, BenchmarkReport, ParetoReport, PhaseOutcome, ReportOptions,
};
pub use summary::{summarize, SummaryOptions};

#[derive(Debug, thiserror::Error)]
pub enum ParetoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("{0} holds no records")]
    Empty(PathBuf),
    #[error("no records for parent model {0}")]
    MissingParent(String),
    #[error("need at least 3 grid points, got {0}")]
    TooFewPoints(usize),
    #[error("strengths must be finite and strictly increasing")]
    NotIncreasing,
    #[error("accuracy is flat across the grid; no transition to locate")]
    NoTransition,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot write csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl ParetoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ParetoError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            ParetoError::Io { .. } => true,
            ParetoError::Csv { source, .. } => source.is_io_error(),
            _ => false,
        }
    }
}

/// One model on one benchmark, reduced to accuracy and token cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub model_id: String,
    pub benchmark: String,
    pub method: String,
    pub strength: f64,
    pub accuracy_mean: f64,
    /// Two-sided percentile bootstrap interval.
    pub accuracy_ci: (f64, f64),
    pub mean_tokens: f64,
    pub median_tokens: f64,
    pub n_trials: usize,
}
