use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::HarnessError;
use crate::ids::{DemoSet, SampleId};
use crate::oracle::Evaluator;

/// Outcome of the task-level coincidence analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coincidence {
    /// Candidate set with the best mean utility over all test queries.
    pub task_best: DemoSet,
    pub task_best_utility: f64,
    /// Share of queries whose own best set is `task_best`.
    pub fraction: f64,
    pub per_query_best: BTreeMap<SampleId, DemoSet>,
}

/// Dense utility table: `rows[s][q]` is set `s` on query `q`.
fn utility_table(
    oracle: &dyn Evaluator,
    sets: &[DemoSet],
    queries: &[SampleId],
) -> Result<Vec<Vec<f64>>, HarnessError> {
    sets.par_iter()
        .map(|s| {
            queries
                .iter()
                .map(|&q| Ok(oracle.evaluate(s, q)?.value()))
                .collect::<Result<Vec<f64>, HarnessError>>()
        })
        .collect()
}

fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|b| b.0).unwrap_or(0)
}

/// For every query finds its best candidate set, then measures how often that
/// matches the single best set for the whole task. Ties go to the earlier
/// candidate set.
pub fn coincidence_analysis(
    oracle: &dyn Evaluator,
    candidate_sets: &[DemoSet],
    test_queries: &[SampleId],
) -> Result<Coincidence, HarnessError> {
    if candidate_sets.is_empty() || test_queries.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let table = utility_table(oracle, candidate_sets, test_queries)?;
    let m = test_queries.len() as f64;
    let means: Vec<f64> = table.iter().map(|row| row.iter().sum::<f64>() / m).collect();
    let best = first_argmax(means.iter().copied());

    let mut per_query_best = BTreeMap::new();
    let mut hits = 0usize;
    for (j, &q) in test_queries.iter().enumerate() {
        let b = first_argmax(table.iter().map(|row| row[j]));
        if b == best {
            hits += 1;
        }
        per_query_best.insert(q, candidate_sets[b].clone());
    }
    Ok(Coincidence {
        task_best: candidate_sets[best].clone(),
        task_best_utility: means[best],
        fraction: hits as f64 / m,
        per_query_best,
    })
}

/// Share of queries for which `chosen` equals the per-query best.
pub fn hit_rate(
    per_query_best: &BTreeMap<SampleId, DemoSet>,
    chosen: &BTreeMap<SampleId, DemoSet>,
) -> f64 {
    let hits = per_query_best
        .iter()
        .filter(|(q, best)| chosen.get(q) == Some(best))
        .count();
    hits as f64 / per_query_best.len().max(1) as f64
}

/// Rank of the chosen set among all enumerated sets, per query. Rank 1 is the
/// worst; `max_rank` (the number of sets) is the best.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankHistogram {
    pub max_rank: usize,
    /// `counts[r - 1]` queries had their chosen set at rank `r`.
    pub counts: Vec<u64>,
    pub ranks: BTreeMap<SampleId, usize>,
}

impl RankHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Share of queries whose chosen set ranked at the top.
    pub fn top_share(&self) -> f64 {
        self.counts[self.max_rank - 1] as f64 / self.total().max(1) as f64
    }
}

/// Ranks each query's chosen set in ascending utility order among
/// `all_sets`; tied sets share the lowest rank of their group.
pub fn rank_frequency(
    oracle: &dyn Evaluator,
    chosen_per_query: &BTreeMap<SampleId, DemoSet>,
    all_sets: &[DemoSet],
    test_queries: &[SampleId],
) -> Result<RankHistogram, HarnessError> {
    if all_sets.is_empty() || test_queries.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let index: BTreeMap<&DemoSet, usize> = all_sets.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut chosen_index = Vec::with_capacity(test_queries.len());
    for &q in test_queries {
        let set = chosen_per_query.get(&q).ok_or(HarnessError::EmptyInput)?;
        let i = *index
            .get(set)
            .ok_or_else(|| HarnessError::ChosenSetNotEnumerated {
                query: q,
                set: set.clone(),
            })?;
        chosen_index.push(i);
    }
    let table = utility_table(oracle, all_sets, test_queries)?;
    let mut counts = vec![0u64; all_sets.len()];
    let mut ranks = BTreeMap::new();
    for (j, &q) in test_queries.iter().enumerate() {
        let v = table[chosen_index[j]][j];
        let rank = 1 + table.iter().filter(|row| row[j] < v).count();
        counts[rank - 1] += 1;
        ranks.insert(q, rank);
    }
    Ok(RankHistogram {
        max_rank: all_sets.len(),
        counts,
        ranks,
    })
}
