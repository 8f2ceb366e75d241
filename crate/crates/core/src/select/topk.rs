use rayon::prelude::*;

use super::{
    argmax, check_inputs, query_set, HoldoutMode, SelectError, SelectOptions, SelectionResult,
    StrategyTag, TraceEvent, TraceStep,
};
use crate::ids::{DemoSet, SampleId};
use crate::oracle::{aggregate_heldout_score, Counted, Evaluator, OracleError};
use crate::utility::Utility;

/// Scores every candidate alone and keeps the `k` best.
///
/// By default the singleton scores are computed once and sorted (descending,
/// ties by candidate order), costing `|candidates|` set evaluations. With
/// `options.topk_loop` the argmax is recomputed over the shrinking pool `k`
/// times, which only differs in loocv mode where the query set shrinks too.
pub fn select_top_k(
    oracle: &dyn Evaluator,
    candidates: &[SampleId],
    holdout: &[SampleId],
    k: usize,
    options: &SelectOptions,
) -> Result<SelectionResult, SelectError> {
    let mode = options.holdout;
    check_inputs(candidates, holdout, mode)?;
    if k == 0 || k > candidates.len() {
        return Err(SelectError::BadK {
            k,
            pool: candidates.len(),
        });
    }
    let counted = Counted::new(oracle);
    let mut trace = Vec::new();
    let mut set_evaluations = 0u64;
    let mut picked: Vec<(SampleId, f64)> = Vec::with_capacity(k);
    // singleton score reusable as the final validation score when k == 1
    let mut single_score: Option<Utility> = None;

    if options.topk_loop {
        let mut remaining = candidates.to_vec();
        for step in 0..k {
            let scores = score_singletons(&counted, &remaining, &remaining, holdout, mode)?;
            set_evaluations += remaining.len() as u64;
            for (&c, u) in remaining.iter().zip(&scores) {
                trace.push(TraceStep {
                    step,
                    candidate: c,
                    utility: u.value(),
                    event: TraceEvent::Considered,
                });
            }
            let values: Vec<f64> = scores.iter().map(Utility::value).collect();
            let best = argmax(&values).expect("remaining is non-empty");
            if step == 0 {
                single_score = Some(scores[best]);
            }
            let chosen = remaining.remove(best);
            picked.push((chosen, values[best]));
        }
    } else {
        let scores = score_singletons(&counted, candidates, candidates, holdout, mode)?;
        set_evaluations += candidates.len() as u64;
        for (&c, u) in candidates.iter().zip(&scores) {
            trace.push(TraceStep {
                step: 0,
                candidate: c,
                utility: u.value(),
                event: TraceEvent::Considered,
            });
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        // stable sort keeps candidate order among equal scores
        order.sort_by(|&a, &b| scores[b].value().total_cmp(&scores[a].value()));
        single_score = Some(scores[order[0]]);
        picked.extend(order[..k].iter().map(|&i| (candidates[i], scores[i].value())));
    }

    for (rank, &(c, v)) in picked.iter().enumerate() {
        trace.push(TraceStep {
            step: rank,
            candidate: c,
            utility: v,
            event: TraceEvent::Accepted,
        });
    }
    let chosen = DemoSet::canonicalize(picked.iter().map(|p| p.0));

    let validation_utility = if k == 1 {
        single_score
    } else {
        let queries = query_set(mode, candidates, holdout, &chosen);
        if queries.is_empty() {
            None
        } else {
            Some(aggregate_heldout_score(&counted, &chosen, &queries)?)
        }
    };

    Ok(SelectionResult {
        strategy: StrategyTag::TopK,
        holdout_mode: mode,
        chosen,
        validation_utility,
        trace,
        set_evaluations,
        oracle_calls: counted.calls(),
    })
}

/// Scores `{x}` for each `x` in `pool`, with loocv query sets drawn from
/// `universe`.
fn score_singletons(
    oracle: &dyn Evaluator,
    pool: &[SampleId],
    universe: &[SampleId],
    holdout: &[SampleId],
    mode: HoldoutMode,
) -> Result<Vec<Utility>, SelectError> {
    let scored: Vec<Result<Utility, OracleError>> = pool
        .par_iter()
        .map(|&x| {
            let set = DemoSet::singleton(x);
            let queries = query_set(mode, universe, holdout, &set);
            aggregate_heldout_score(oracle, &set, &queries)
        })
        .collect();
    scored.into_iter().map(|r| r.map_err(SelectError::from)).collect()
}
