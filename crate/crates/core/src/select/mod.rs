//! Demonstration-set selection strategies.
//!
//! Task-level strategies ([`select_top_k`], [`select_greedy`],
//! [`select_exhaustive`], [`select_random_baseline`]) pick one set for every
//! query by scoring candidate sets on validation queries. The sample-level
//! [`select_nearest_neighbor`] baseline picks per query from feature vectors
//! alone and never calls an evaluator.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::CoreError;
use crate::ids::{DemoSet, SampleId};
use crate::oracle::OracleError;
use crate::utility::Utility;

mod baseline;
mod greedy;
mod nn;
mod topk;

pub use baseline::{select_exhaustive, select_random_baseline, RandomBaseline};
pub use greedy::select_greedy;
pub use nn::{cosine_similarity, select_nearest_neighbor};
pub use topk::select_top_k;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("K = {k} is outside 1..={pool}")]
    BadK { k: usize, pool: usize },
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("duplicate candidate {0}")]
    DuplicateCandidate(SampleId),
    #[error("fixed holdout needs a non-empty query set")]
    EmptyHoldout,
    #[error("holdout query {0} is also a candidate")]
    HoldoutOverlap(SampleId),
    #[error("feature vector for {id} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("feature vector for {0} has zero norm")]
    ZeroVector(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// How candidate sets are scored during selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutMode {
    /// Every set is scored on the same frozen query set, disjoint from the
    /// candidates.
    #[default]
    Fixed,
    /// Set `P` (with pending addition `x`) is scored on the candidates outside
    /// `P ∪ {x}`, plus any extra holdout queries.
    Loocv,
}

impl fmt::Display for HoldoutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HoldoutMode::Fixed => "fixed",
            HoldoutMode::Loocv => "loocv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    TopK,
    Greedy,
    Random,
    Exhaustive,
    NearestNeighbor,
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyTag::TopK => "topk",
            StrategyTag::Greedy => "greedy",
            StrategyTag::Random => "random",
            StrategyTag::Exhaustive => "exhaustive",
            StrategyTag::NearestNeighbor => "nn",
        })
    }
}

/// Knobs shared by the task-level strategies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectOptions {
    #[serde(default)]
    pub holdout: HoldoutMode,
    /// Greedy in loocv mode: rescore the current set on the shrunken query
    /// set before comparing, instead of reusing the previous step's score.
    #[serde(default)]
    pub fair_loocv: bool,
    /// Top-K: rerun the argmax over the shrinking pool K times instead of
    /// sorting one sweep of singleton scores.
    #[serde(default)]
    pub topk_loop: bool,
}

impl SelectOptions {
    pub fn fixed() -> Self {
        SelectOptions::default()
    }

    pub fn loocv() -> Self {
        SelectOptions {
            holdout: HoldoutMode::Loocv,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    /// Scored as a possible addition.
    Considered,
    Accepted,
    /// Best addition of its step, refused by the stopping rule.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub candidate: SampleId,
    pub utility: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub strategy: StrategyTag,
    pub holdout_mode: HoldoutMode,
    pub chosen: DemoSet,
    /// Score of `chosen` on its final validation query set; `None` when that
    /// set is empty (loocv with every candidate chosen and no extra holdout).
    pub validation_utility: Option<Utility>,
    pub trace: Vec<TraceStep>,
    /// Demonstration sets scored to make the selection (the unit of the
    /// complexity bounds).
    pub set_evaluations: u64,
    /// Evaluator calls made by the whole run, including final scoring.
    pub oracle_calls: u64,
}

impl SelectionResult {
    /// Utilities of accepted steps, in order.
    pub fn accepted_utilities(&self) -> Vec<f64> {
        self.trace
            .iter()
            .filter(|t| t.event == TraceEvent::Accepted)
            .map(|t| t.utility)
            .collect()
    }

    pub fn first_accepted(&self) -> Option<SampleId> {
        self.trace
            .iter()
            .find(|t| t.event == TraceEvent::Accepted)
            .map(|t| t.candidate)
    }
}

/// Validates the pool and holdout shared by every task-level strategy.
fn check_inputs(
    candidates: &[SampleId],
    holdout: &[SampleId],
    mode: HoldoutMode,
) -> Result<(), SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let mut seen = std::collections::HashSet::with_capacity(candidates.len());
    for &c in candidates {
        if !seen.insert(c) {
            return Err(SelectError::DuplicateCandidate(c));
        }
    }
    if mode == HoldoutMode::Fixed && holdout.is_empty() {
        return Err(SelectError::EmptyHoldout);
    }
    if let Some(&q) = holdout.iter().find(|q| seen.contains(q)) {
        return Err(SelectError::HoldoutOverlap(q));
    }
    Ok(())
}

/// Query set for scoring `set` in the given mode: the holdout when fixed,
/// otherwise the candidates outside `set` (in candidate order) followed by the
/// holdout.
fn query_set(
    mode: HoldoutMode,
    candidates: &[SampleId],
    holdout: &[SampleId],
    set: &DemoSet,
) -> Vec<SampleId> {
    match mode {
        HoldoutMode::Fixed => holdout.to_vec(),
        HoldoutMode::Loocv => candidates
            .iter()
            .copied()
            .filter(|c| !set.contains(*c))
            .chain(holdout.iter().copied())
            .collect(),
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}
