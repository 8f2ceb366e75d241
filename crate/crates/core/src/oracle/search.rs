//! Task-level scoring over a query set and exhaustive subset search.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::Serialize;

use super::{Evaluator, OracleError};
use crate::ids::{DemoSet, SampleId};
use crate::subsets::enumerate_subsets;
use crate::utility::Utility;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredSet {
    pub set: DemoSet,
    pub utility: Utility,
}

/// Mean utility of `demos` over `queries`. Makes exactly `queries.len()`
/// evaluator calls, summing in query order.
pub fn aggregate_heldout_score(
    oracle: &dyn Evaluator,
    demos: &DemoSet,
    queries: &[SampleId],
) -> Result<Utility, OracleError> {
    if queries.is_empty() {
        return Err(OracleError::EmptyQuerySet);
    }
    if let Some(&q) = queries.iter().find(|&&q| demos.contains(q)) {
        return Err(OracleError::Overlap(q));
    }
    let mut sum = 0.0;
    let mut tag = None;
    for &q in queries {
        let u = oracle.evaluate(demos, q)?;
        tag.get_or_insert(u.source_metric());
        sum += u.value();
    }
    let tag = tag.expect("queries is non-empty");
    Ok(Utility::new(sum / queries.len() as f64, tag)?)
}

/// Scores a sequence of sets, evaluating in parallel but returning results
/// (and the first error) in input order.
pub fn score_sets<I>(
    oracle: &dyn Evaluator,
    sets: I,
    queries: &[SampleId],
    visit: impl FnMut(ScoredSet),
) -> Result<(), OracleError>
where
    I: Iterator<Item = DemoSet>,
{
    score_sets_by(oracle, sets, |_| Cow::Borrowed(queries), visit)
}

/// Like [`score_sets`], with a query set chosen per demonstration set.
pub fn score_sets_by<'q, I, F>(
    oracle: &dyn Evaluator,
    sets: I,
    queries_for: F,
    mut visit: impl FnMut(ScoredSet),
) -> Result<(), OracleError>
where
    I: Iterator<Item = DemoSet>,
    F: Fn(&DemoSet) -> Cow<'q, [SampleId]> + Sync,
{
    let mut sets = sets.peekable();
    while sets.peek().is_some() {
        let chunk: Vec<DemoSet> = sets.by_ref().take(CHUNK).collect();
        let scored: Vec<Result<Utility, OracleError>> = chunk
            .par_iter()
            .map(|s| aggregate_heldout_score(oracle, s, &queries_for(s)))
            .collect();
        for (set, utility) in chunk.into_iter().zip(scored) {
            visit(ScoredSet {
                set,
                utility: utility?,
            });
        }
    }
    Ok(())
}

/// Scores every non-empty subset of `candidates` (up to `max_size`) on
/// `queries`, in enumeration order.
pub fn score_subsets(
    oracle: &dyn Evaluator,
    candidates: &[SampleId],
    queries: &[SampleId],
    max_size: Option<usize>,
) -> Result<Vec<ScoredSet>, OracleError> {
    check_disjoint(candidates, queries)?;
    let mut out = Vec::new();
    score_sets(
        oracle,
        enumerate_subsets(candidates, max_size)?,
        queries,
        |s| out.push(s),
    )?;
    Ok(out)
}

/// Exhaustive search for the subset with the highest mean utility over
/// `queries`. Ties go to the first subset in enumeration order.
pub fn brute_force_best(
    oracle: &dyn Evaluator,
    candidates: &[SampleId],
    queries: &[SampleId],
    max_size: Option<usize>,
) -> Result<ScoredSet, OracleError> {
    check_disjoint(candidates, queries)?;
    let mut best: Option<ScoredSet> = None;
    score_sets(
        oracle,
        enumerate_subsets(candidates, max_size)?,
        queries,
        |s| match &best {
            Some(b) if s.utility.value() <= b.utility.value() => {}
            _ => best = Some(s),
        },
    )?;
    best.ok_or(OracleError::EmptyDemoSet)
}

fn check_disjoint(candidates: &[SampleId], queries: &[SampleId]) -> Result<(), OracleError> {
    if queries.is_empty() {
        return Err(OracleError::EmptyQuerySet);
    }
    match queries.iter().find(|q| candidates.contains(q)) {
        Some(&q) => Err(OracleError::Overlap(q)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ids;
    use crate::oracle::synthetic::{Aggregator, LandscapeParams, SyntheticLandscape};
    use crate::oracle::tabulated::SubsetTable;
    use crate::utility::MetricTag;

    fn set(raw: &[u64]) -> DemoSet {
        DemoSet::canonicalize(ids(raw.iter().copied()))
    }

    fn util(v: f64) -> Utility {
        Utility::new(v, MetricTag::Synthetic).unwrap()
    }

    fn modular(n_demos: usize, n_queries: usize, seed: u64) -> SyntheticLandscape {
        SyntheticLandscape::new(LandscapeParams {
            n_demos,
            n_queries,
            seed,
            aggregator: Aggregator::Sum,
            interaction_scale: 0.0,
            noise_scale: 0.0,
            planted: None,
        })
        .unwrap()
    }

    #[test]
    fn single_query_is_passthrough() {
        let table = SubsetTable::from_entries([((set(&[1]), SampleId(5)), util(0.25))]).unwrap();
        let u = aggregate_heldout_score(&table, &set(&[1]), &ids([5])).unwrap();
        assert_eq!(u.value(), 0.25);
    }

    #[test]
    fn two_queries_mean() {
        let table = SubsetTable::from_entries([
            ((set(&[1]), SampleId(5)), util(0.2)),
            ((set(&[1]), SampleId(6)), util(0.4)),
        ])
        .unwrap();
        let u = aggregate_heldout_score(&table, &set(&[1]), &ids([5, 6])).unwrap();
        assert!((u.value() - 0.3).abs() < 1e-15);
        assert_eq!(table.calls(), 2);
    }

    #[test]
    fn modular_landscape_aggregate() {
        let land = modular(4, 4, 11);
        let queries = ids([4, 5]);
        let u = aggregate_heldout_score(&land, &set(&[0, 1]), &queries).unwrap();
        let a = land.base_matrix();
        let expected = ((a.get(0, 4) + a.get(1, 4)) + (a.get(0, 5) + a.get(1, 5))) / 2.0;
        assert_eq!(u.value(), expected);
    }

    #[test]
    fn empty_and_overlap() {
        let land = modular(4, 4, 1);
        assert!(matches!(
            aggregate_heldout_score(&land, &set(&[0]), &[]),
            Err(OracleError::EmptyQuerySet)
        ));
        assert!(matches!(
            aggregate_heldout_score(&land, &set(&[0, 1]), &ids([1, 5])),
            Err(OracleError::Overlap(SampleId(1)))
        ));
        assert!(matches!(
            brute_force_best(&land, &ids([0, 1]), &ids([1]), None),
            Err(OracleError::Overlap(SampleId(1)))
        ));
    }

    #[test]
    fn brute_force_hand_case() {
        let q = SampleId(9);
        let table = SubsetTable::from_entries([
            ((set(&[1]), q), util(0.3)),
            ((set(&[2]), q), util(0.5)),
            ((set(&[1, 2]), q), util(0.4)),
        ])
        .unwrap();
        let best = brute_force_best(&table, &ids([1, 2]), &[q], None).unwrap();
        assert_eq!(best.set, set(&[2]));
        assert_eq!(best.utility.value(), 0.5);
        assert_eq!(table.calls(), 3);
    }

    #[test]
    fn brute_force_tie_goes_to_first() {
        let q = SampleId(9);
        let table = SubsetTable::from_entries([
            ((set(&[1]), q), util(0.5)),
            ((set(&[2]), q), util(0.5)),
            ((set(&[1, 2]), q), util(0.1)),
        ])
        .unwrap();
        assert_eq!(brute_force_best(&table, &ids([2, 1]), &[q], None).unwrap().set, set(&[1]));
    }

    #[test]
    fn brute_force_modular_takes_everything() {
        for seed in 0..5 {
            let land = modular(6, 10, seed);
            let queries = ids(6..16);
            let best = brute_force_best(&land, &ids(0..6), &queries, None).unwrap();
            assert_eq!(best.set, set(&[0, 1, 2, 3, 4, 5]));
            assert_eq!(land.calls(), 63 * 10);
        }
    }

    #[test]
    fn brute_force_dominates_every_subset() {
        let land = SyntheticLandscape::new(LandscapeParams {
            n_demos: 7,
            n_queries: 5,
            seed: 3,
            aggregator: Aggregator::Mean,
            interaction_scale: 0.5,
            noise_scale: 0.1,
            planted: None,
        })
        .unwrap();
        let queries = ids(7..12);
        let all = score_subsets(&land, &ids(0..7), &queries, None).unwrap();
        let best = brute_force_best(&land, &ids(0..7), &queries, None).unwrap();
        assert_eq!(all.len(), 127);
        assert!(all.iter().all(|s| s.utility.value() <= best.utility.value()));
        let first_max = all
            .iter()
            .find(|s| s.utility.value() == best.utility.value())
            .unwrap();
        assert_eq!(first_max.set, best.set);
    }
}
