use std::borrow::Cow;

use serde::Serialize;

use super::{
    check_inputs, query_set, HoldoutMode, SelectError, SelectOptions, SelectionResult, StrategyTag,
    TraceEvent, TraceStep,
};
use crate::ids::SampleId;
use crate::oracle::{brute_force_best, score_sets_by, score_subsets, Counted, Evaluator, ScoredSet};
use crate::subsets::enumerate_subsets;
use crate::utility::Utility;

/// Expected utility of a uniformly random non-empty subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomBaseline {
    pub mean: Utility,
    /// Every enumerated subset with its utility, in enumeration order.
    pub distribution: Vec<ScoredSet>,
    pub oracle_calls: u64,
}

/// Scores every subset of `candidates` (up to `max_size`) on the fixed
/// `holdout` and averages them without weighting.
pub fn select_random_baseline(
    oracle: &dyn Evaluator,
    candidates: &[SampleId],
    holdout: &[SampleId],
    max_size: Option<usize>,
) -> Result<RandomBaseline, SelectError> {
    check_inputs(candidates, holdout, HoldoutMode::Fixed)?;
    let counted = Counted::new(oracle);
    let distribution = score_subsets(&counted, candidates, holdout, max_size)?;
    let sum: f64 = distribution.iter().map(|s| s.utility.value()).sum();
    let tag = distribution[0].utility.source_metric();
    let mean = Utility::new(sum / distribution.len() as f64, tag).map_err(crate::oracle::OracleError::from)?;
    Ok(RandomBaseline {
        mean,
        distribution,
        oracle_calls: counted.calls(),
    })
}

/// Exhaustive search over every subset of `candidates`.
///
/// In fixed mode every subset is scored on `holdout`. In loocv mode subset
/// `P` is scored on the candidates outside `P` plus `holdout`; subsets left
/// with no queries are skipped.
pub fn select_exhaustive(
    oracle: &dyn Evaluator,
    candidates: &[SampleId],
    holdout: &[SampleId],
    max_size: Option<usize>,
    options: &SelectOptions,
) -> Result<SelectionResult, SelectError> {
    let mode = options.holdout;
    check_inputs(candidates, holdout, mode)?;
    let counted = Counted::new(oracle);
    let mut set_evaluations = 0u64;

    let best = match mode {
        HoldoutMode::Fixed => {
            let best = brute_force_best(&counted, candidates, holdout, max_size)?;
            set_evaluations = counted.calls() / holdout.len() as u64;
            best
        }
        HoldoutMode::Loocv => {
            let mut best: Option<ScoredSet> = None;
            let sets = enumerate_subsets(candidates, max_size)?
                .filter(|s| !holdout.is_empty() || s.len() < candidates.len());
            score_sets_by(
                &counted,
                sets,
                |s| Cow::Owned(query_set(mode, candidates, holdout, s)),
                |s| {
                    set_evaluations += 1;
                    match &best {
                        Some(b) if s.utility.value() <= b.utility.value() => {}
                        _ => best = Some(s),
                    }
                },
            )?;
            best.ok_or(SelectError::EmptyHoldout)?
        }
    };

    let trace = best
        .set
        .iter()
        .enumerate()
        .map(|(i, c)| TraceStep {
            step: i,
            candidate: c,
            utility: best.utility.value(),
            event: TraceEvent::Accepted,
        })
        .collect();
    Ok(SelectionResult {
        strategy: StrategyTag::Exhaustive,
        holdout_mode: mode,
        chosen: best.set,
        validation_utility: Some(best.utility),
        trace,
        set_evaluations,
        oracle_calls: counted.calls(),
    })
}
