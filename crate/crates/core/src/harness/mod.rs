//! Experiment orchestration: configs, manifest ingestion, seeded multi-run
//! execution, reports, call audits and the coincidence and rank analyses.

use std::path::PathBuf;

use thiserror::Error;

use crate::error::CoreError;
use crate::ids::{DemoSet, SampleId};
use crate::oracle::OracleError;
use crate::select::SelectError;

mod analysis;
mod config;
mod manifest;
mod report;
mod run;

pub use analysis::{coincidence_analysis, hit_rate, rank_frequency, Coincidence, RankHistogram};
pub use config::{AnalysisConfig, CandidateSets, ExperimentConfig, IdList, OracleSpec, StrategySpec};
pub use manifest::{
    ingest_manifest, load_image, load_mask, read_features, write_pgm, write_ppm, ArtifactError,
    Manifest, ManifestEntry, Pool, MANIFEST_VERSION, MASK_THRESHOLD,
};
pub use report::{
    audit_calls, call_bound, render_audit, render_table, AggregateRow, AuditRow, CallBound,
    CellRow, Provenance, Report, REPORT_FORMAT_VERSION,
};
pub use run::{
    run_analysis, run_analysis_with, run_experiment, run_experiment_with, AnalysisReport,
    SeedAnalysis, StrategyRank,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{what}: missing file {}", path.display())]
    MissingFile { what: String, path: PathBuf },
    #[error("sample {id}: {message}")]
    ShapeMismatch { id: SampleId, message: String },
    #[error("features row {row} (id {id}) has {found} components, expected {expected}")]
    DimensionMismatch {
        row: usize,
        id: SampleId,
        expected: usize,
        found: usize,
    },
    #[error("no feature vector for sample {0}")]
    MissingFeature(SampleId),
    #[error("analysis needs non-empty candidate sets and test queries")]
    EmptyInput,
    #[error("chosen set {set} for query {query} is not among the enumerated sets")]
    ChosenSetNotEnumerated { query: SampleId, set: DemoSet },
    #[error("seed {seed}, strategy {strategy}: {source}")]
    Cell {
        seed: u64,
        strategy: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Coarse failure class, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad flags, config or request.
    Usage,
    /// Unreadable, missing or malformed input data.
    Data,
    /// The evaluator failed or broke protocol.
    Oracle,
}

pub fn classify_oracle(e: &OracleError) -> ErrorClass {
    match e {
        OracleError::Parse { .. }
        | OracleError::Io { .. }
        | OracleError::MissingEntry { .. }
        | OracleError::IndexOutOfRange { .. }
        | OracleError::CardinalityUnsupported(_) => ErrorClass::Data,
        OracleError::Protocol(_)
        | OracleError::Crashed(_)
        | OracleError::Timeout(_)
        | OracleError::NonFinite(_) => ErrorClass::Oracle,
        OracleError::EmptyDemoSet
        | OracleError::EmptyQuerySet
        | OracleError::Overlap(_)
        | OracleError::InvalidParams(_)
        | OracleError::Core(_) => ErrorClass::Usage,
    }
}

pub fn classify_select(e: &SelectError) -> ErrorClass {
    match e {
        SelectError::Oracle(o) => classify_oracle(o),
        SelectError::DimensionMismatch { .. } | SelectError::ZeroVector(_) => ErrorClass::Data,
        _ => ErrorClass::Usage,
    }
}

impl HarnessError {
    pub fn class(&self) -> ErrorClass {
        match self {
            HarnessError::Config(_)
            | HarnessError::EmptyInput
            | HarnessError::ChosenSetNotEnumerated { .. }
            | HarnessError::Core(_) => ErrorClass::Usage,
            HarnessError::Parse { .. }
            | HarnessError::Io { .. }
            | HarnessError::MissingFile { .. }
            | HarnessError::ShapeMismatch { .. }
            | HarnessError::DimensionMismatch { .. }
            | HarnessError::MissingFeature(_) => ErrorClass::Data,
            HarnessError::Cell { source, .. } => source.class(),
            HarnessError::Oracle(e) => classify_oracle(e),
            HarnessError::Select(e) => classify_select(e),
        }
    }
}
