use std::borrow::Cow;

use super::{
    argmax, check_inputs, query_set, HoldoutMode, SelectError, SelectOptions, SelectionResult,
    StrategyTag, TraceEvent, TraceStep,
};
use crate::ids::{DemoSet, SampleId};
use crate::oracle::{aggregate_heldout_score, score_sets_by, Counted, Evaluator};

/// Forward greedy search with early stopping.
///
/// Starting from the empty set, each step scores `P ∪ {x}` for every
/// remaining candidate `x` and takes the best (ties by candidate order). The
/// first pick is always accepted. Afterwards a pick is accepted only when its
/// score `a_new` is at least the previous accepted score `a_ori`; otherwise
/// search stops. Exhausting the pool returns the full set.
///
/// In loocv mode the query set for `P ∪ {x}` is the candidates outside it
/// plus any extra holdout; a step whose query set would be empty ends the
/// search. `options.fair_loocv` rescores `P` on the new step's query set
/// before comparing.
pub fn select_greedy(
    oracle: &dyn Evaluator,
    candidates: &[SampleId],
    holdout: &[SampleId],
    options: &SelectOptions,
) -> Result<SelectionResult, SelectError> {
    let mode = options.holdout;
    check_inputs(candidates, holdout, mode)?;
    let counted = Counted::new(oracle);

    let mut current = DemoSet::empty();
    let mut remaining: Vec<SampleId> = candidates.to_vec();
    let mut a_ori: Option<f64> = None;
    let mut validation_utility = None;
    let mut trace = Vec::new();
    let mut set_evaluations = 0u64;
    let mut step = 0usize;

    while !remaining.is_empty() {
        if mode == HoldoutMode::Loocv && remaining.len() == 1 && holdout.is_empty() {
            log::debug!("greedy: no queries left for the last candidate, stopping");
            break;
        }
        let proposals: Vec<DemoSet> = remaining.iter().map(|&x| current.with(x)).collect();
        let mut scores = Vec::with_capacity(proposals.len());
        score_sets_by(
            &counted,
            proposals.iter().cloned(),
            |s| Cow::Owned(query_set(mode, candidates, holdout, s)),
            |scored| scores.push(scored.utility),
        )?;
        set_evaluations += proposals.len() as u64;
        for (&x, u) in remaining.iter().zip(&scores) {
            trace.push(TraceStep {
                step,
                candidate: x,
                utility: u.value(),
                event: TraceEvent::Considered,
            });
        }

        let values: Vec<f64> = scores.iter().map(|u| u.value()).collect();
        let best = argmax(&values).expect("remaining is non-empty");
        let a_new = values[best];
        let x = remaining[best];

        let accept = match a_ori {
            None => true,
            Some(prev) => {
                let reference = if options.fair_loocv && mode == HoldoutMode::Loocv {
                    let queries = query_set(mode, candidates, holdout, &proposals[best]);
                    aggregate_heldout_score(&counted, &current, &queries)?.value()
                } else {
                    prev
                };
                a_new >= reference
            }
        };
        trace.push(TraceStep {
            step,
            candidate: x,
            utility: a_new,
            event: if accept {
                TraceEvent::Accepted
            } else {
                TraceEvent::Rejected
            },
        });
        if !accept {
            break;
        }
        current = proposals[best].clone();
        remaining.remove(best);
        a_ori = Some(a_new);
        validation_utility = Some(scores[best]);
        step += 1;
    }

    Ok(SelectionResult {
        strategy: StrategyTag::Greedy,
        holdout_mode: mode,
        chosen: current,
        validation_utility,
        trace,
        set_evaluations,
        oracle_calls: counted.calls(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ids;
    use crate::oracle::brute_force_best;
    use crate::select::testutil::{landscape, set, table};
    use crate::select::{select_top_k, TraceEvent};

    #[test]
    fn stops_when_pair_is_worse() {
        // a=1, b=2
        let t = table(9, &[(&[1], 0.5), (&[2], 0.4), (&[1, 2], 0.3)]);
        let r = select_greedy(&t, &ids([1, 2]), &ids([9]), &SelectOptions::fixed()).unwrap();
        assert_eq!(r.chosen, set(&[1]));
        assert_eq!(r.validation_utility.unwrap().value(), 0.5);
        assert_eq!(r.set_evaluations, 3);
        let rejected: Vec<_> = r.trace.iter().filter(|t| t.event == TraceEvent::Rejected).collect();
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].candidate, SampleId(2));
    }

    #[test]
    fn equal_score_is_accepted() {
        let t = table(9, &[(&[1], 0.5), (&[2], 0.4), (&[1, 2], 0.5)]);
        let r = select_greedy(&t, &ids([1, 2]), &ids([9]), &SelectOptions::fixed()).unwrap();
        assert_eq!(r.chosen, set(&[1, 2]));
        assert_eq!(r.accepted_utilities(), vec![0.5, 0.5]);
    }

    #[test]
    fn single_candidate() {
        let t = table(9, &[(&[4], -0.5)]);
        let r = select_greedy(&t, &ids([4]), &ids([9]), &SelectOptions::fixed()).unwrap();
        assert_eq!(r.chosen, set(&[4]));
    }

    #[test]
    fn empty_pool() {
        let t = table(9, &[]);
        assert!(matches!(
            select_greedy(&t, &[], &ids([9]), &SelectOptions::fixed()),
            Err(SelectError::EmptyPool)
        ));
    }

    #[test]
    fn modular_reaches_brute_force_optimum() {
        for seed in 0..20 {
            let land = landscape(6, 10, seed, 0.0, 0.0);
            let (c, q) = (ids(0..6), ids(6..16));
            let g = select_greedy(&land, &c, &q, &SelectOptions::fixed()).unwrap();
            let b = brute_force_best(&land, &c, &q, None).unwrap();
            assert_eq!(g.chosen, set(&[0, 1, 2, 3, 4, 5]));
            assert_eq!(g.chosen, b.set);
            assert!(g.validation_utility.unwrap().bit_eq(&b.utility));
            assert_eq!(g.set_evaluations, 21);
        }
    }

    #[test]
    fn first_pick_matches_top_1_both_modes() {
        for seed in 0..20 {
            let land = landscape(6, 6, seed, 0.5, 0.1);
            for (opts, holdout) in [(SelectOptions::fixed(), ids(6..12)), (SelectOptions::loocv(), vec![])] {
                let g = select_greedy(&land, &ids(0..6), &holdout, &opts).unwrap();
                let t = select_top_k(&land, &ids(0..6), &holdout, 1, &opts).unwrap();
                assert_eq!(g.first_accepted(), t.first_accepted());
                assert_eq!(t.chosen, DemoSet::singleton(g.first_accepted().unwrap()));
            }
        }
    }

    #[test]
    fn fixed_mode_trace_is_monotone_and_beats_top_1() {
        for seed in 0..30 {
            let land = landscape(7, 8, seed, 0.5, 0.1);
            let (c, q) = (ids(0..7), ids(7..15));
            let g = select_greedy(&land, &c, &q, &SelectOptions::fixed()).unwrap();
            let acc = g.accepted_utilities();
            assert!(acc.windows(2).all(|w| w[0] <= w[1]));
            let t = select_top_k(&land, &c, &q, 1, &SelectOptions::fixed()).unwrap();
            assert!(g.validation_utility.unwrap().value() >= t.validation_utility.unwrap().value());
            assert!(g.set_evaluations <= 7 * 8 / 2);
        }
    }

    #[test]
    fn loocv_stops_before_running_out_of_queries() {
        let land = landscape(4, 0, 2, 0.0, 0.0);
        let r = select_greedy(&land, &ids(0..4), &[], &SelectOptions::loocv()).unwrap();
        assert!(r.chosen.len() <= 3);
        // step t scores (4 - t) sets on (3 - t) queries
        let mut expected_calls = 0;
        for t in 0..r.chosen.len().min(3) {
            expected_calls += (4 - t) * (3 - t);
        }
        if r.chosen.len() < 3 {
            // the rejected step was also scored
            let t = r.chosen.len();
            expected_calls += (4 - t) * (3 - t);
        }
        assert_eq!(r.oracle_calls as usize, expected_calls);
    }

    #[test]
    fn fair_loocv_costs_extra_calls() {
        let land = landscape(5, 0, 7, 0.5, 0.1);
        let plain = select_greedy(&land, &ids(0..5), &[], &SelectOptions::loocv()).unwrap();
        let fair = select_greedy(
            &land,
            &ids(0..5),
            &[],
            &SelectOptions {
                fair_loocv: true,
                ..SelectOptions::loocv()
            },
        )
        .unwrap();
        assert_eq!(plain.first_accepted(), fair.first_accepted());
        if fair.trace.iter().filter(|t| t.event != TraceEvent::Considered).count() > 1 {
            assert!(fair.oracle_calls > fair.set_evaluations);
        }
    }
}
