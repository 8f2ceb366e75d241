//! Evaluators standing in for the frozen foundation model.
//!
//! An [`Evaluator`] maps a demonstration set and a query to the *scored*
//! outcome of prompting the model, already in higher-is-better form. Every
//! backend is pure within a run and counts its calls.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::error::CoreError;
use crate::ids::{DemoSet, SampleId};
use crate::utility::{NonFinite, Utility};

pub mod external;
pub mod search;
pub mod synthetic;
pub mod tabulated;

pub use external::{ExternalConfig, ExternalEvaluator};
pub use search::{
    aggregate_heldout_score, brute_force_best, score_sets, score_sets_by, score_subsets, ScoredSet,
};
pub use synthetic::{Aggregator, LandscapeParams, Planted, SyntheticLandscape};
pub use tabulated::{OneShotMatrix, SubsetTable};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("empty demonstration set cannot be evaluated")]
    EmptyDemoSet,
    #[error("empty query set")]
    EmptyQuerySet,
    #[error("query {0} is also a demonstration")]
    Overlap(SampleId),
    #[error("id {id} out of range for {what}")]
    IndexOutOfRange { id: SampleId, what: &'static str },
    #[error("one-shot matrix cannot score a set of {0} demonstrations")]
    CardinalityUnsupported(usize),
    #[error("no entry for demos {demos} at query {query}")]
    MissingEntry { demos: DemoSet, query: SampleId },
    #[error("invalid landscape parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("evaluator protocol error: {0}")]
    Protocol(String),
    #[error("evaluator process crashed: {0}")]
    Crashed(String),
    #[error("evaluator did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error(transparent)]
    NonFinite(#[from] NonFinite),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Scores demonstration sets against queries.
pub trait Evaluator: Send + Sync {
    /// Scores `demos` on `query`. Rejects the empty set. Every invocation,
    /// successful or not, advances the call counter by one.
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError>;

    /// Total number of `evaluate` invocations so far.
    fn calls(&self) -> u64;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        (**self).evaluate(demos, query)
    }

    fn calls(&self) -> u64 {
        (**self).calls()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        (**self).evaluate(demos, query)
    }

    fn calls(&self) -> u64 {
        (**self).calls()
    }
}

/// Monotone atomic call counter.
#[derive(Debug, Default)]
pub struct CallCounter(AtomicU64);

impl CallCounter {
    pub fn tick(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Forwards to an inner evaluator while keeping a private count, so a single
/// strategy run can be audited even when the inner evaluator is shared.
pub struct Counted<'a> {
    inner: &'a dyn Evaluator,
    counter: CallCounter,
}

impl<'a> Counted<'a> {
    pub fn new(inner: &'a dyn Evaluator) -> Self {
        Counted {
            inner,
            counter: CallCounter::default(),
        }
    }
}

impl Evaluator for Counted<'_> {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        self.counter.tick();
        self.inner.evaluate(demos, query)
    }

    fn calls(&self) -> u64 {
        self.counter.get()
    }
}
