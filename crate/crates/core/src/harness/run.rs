use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::analysis::{coincidence_analysis, rank_frequency, Coincidence, RankHistogram};
use super::config::{CandidateSets, ExperimentConfig, StrategySpec};
use super::manifest::{ingest_manifest, Pool, MANIFEST_VERSION};
use super::report::{aggregate, audit_calls, CellRow, Provenance, Report, REPORT_FORMAT_VERSION};
use super::HarnessError;
use crate::ids::{DemoSet, SampleId};
use crate::oracle::external::PROTOCOL_VERSION;
use crate::oracle::{
    aggregate_heldout_score, brute_force_best, score_subsets, Counted, Evaluator,
};
use crate::select::{
    select_exhaustive, select_greedy, select_nearest_neighbor, select_random_baseline,
    select_top_k, SelectionResult,
};
use crate::split::{make_split, SplitSpec};
use crate::subsets::{enumerate_subsets, subset_count};

/// A finished cell plus, for strategies that commit to sets, the set used on
/// each test query.
struct CellOutcome {
    row: CellRow,
    chosen_per_query: Option<BTreeMap<SampleId, DemoSet>>,
}

fn load_pool(config: &ExperimentConfig) -> Result<Option<Pool>, HarnessError> {
    config
        .manifest
        .as_ref()
        .map(|m| ingest_manifest(&config.resolve(m)))
        .transpose()
}

/// Builds the configured oracle, loads the manifest and runs every
/// (seed, strategy) cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    let oracle = config.oracle.build(&config.base_dir)?;
    let pool = load_pool(config)?;
    run_experiment_with(config, oracle.as_ref(), pool.as_ref())
}

/// [`run_experiment`] against a caller-supplied oracle and pool.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    oracle: &dyn Evaluator,
    pool: Option<&Pool>,
) -> Result<Report, HarnessError> {
    config.validate()?;
    let (outcomes, _) = run_cells(config, oracle, pool)?;
    let rows: Vec<CellRow> = outcomes.into_iter().map(|o| o.row).collect();
    let labels: Vec<String> = config.strategies.iter().map(StrategySpec::label).collect();
    let hash = config.hash();
    let mut report = Report {
        config_hash: hash.clone(),
        provenance: Provenance {
            config_hash: hash,
            report_format: REPORT_FORMAT_VERSION,
            manifest_format: MANIFEST_VERSION,
            protocol_version: PROTOCOL_VERSION,
        },
        pool_size: config.pool()?.len(),
        n_prime: config.n_prime,
        seeds: config.seeds.clone(),
        strategies: config.strategies.clone(),
        aggregates: aggregate(&rows, &labels),
        rows,
        audit: Vec::new(),
        display_scale: config.display_scale.unwrap_or(1.0),
    };
    report.audit = audit_calls(&report);
    Ok(report)
}

#[allow(clippy::type_complexity)]
fn run_cells(
    config: &ExperimentConfig,
    oracle: &dyn Evaluator,
    pool: Option<&Pool>,
) -> Result<(Vec<CellOutcome>, BTreeMap<u64, SplitSpec>), HarnessError> {
    let pool_ids = config.pool()?;
    let tests = config.test_queries.to_ids();
    let mut splits = BTreeMap::new();
    for &seed in &config.seeds {
        splits.insert(seed, make_split(&pool_ids, config.n_prime, seed)?);
    }
    let cells: Vec<(u64, &StrategySpec)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.strategies.iter().map(move |st| (s, st)))
        .collect();
    let results: Vec<Result<CellOutcome, HarnessError>> = cells
        .par_iter()
        .map(|&(seed, spec)| {
            log::info!("running seed {seed}, strategy {}", spec.label());
            run_cell(oracle, spec, seed, &splits[&seed], &tests, pool).map_err(|e| HarnessError::Cell {
                seed,
                strategy: spec.label(),
                source: Box::new(e),
            })
        })
        .collect();
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((outcomes, splits))
}

fn mean_over(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

fn committed(
    strategy: String,
    seed: u64,
    r: SelectionResult,
    oracle: &dyn Evaluator,
    tests: &[SampleId],
) -> Result<CellOutcome, HarnessError> {
    let test = aggregate_heldout_score(oracle, &r.chosen, tests)?;
    Ok(CellOutcome {
        chosen_per_query: Some(tests.iter().map(|&q| (q, r.chosen.clone())).collect()),
        row: CellRow {
            strategy,
            seed,
            chosen: Some(r.chosen.raw()),
            validation_utility: r.validation_utility.map(|u| u.value()),
            test_utility: test.value(),
            set_evaluations: r.set_evaluations,
            oracle_calls: r.oracle_calls,
        },
    })
}

fn run_cell(
    oracle: &dyn Evaluator,
    spec: &StrategySpec,
    seed: u64,
    split: &SplitSpec,
    tests: &[SampleId],
    pool: Option<&Pool>,
) -> Result<CellOutcome, HarnessError> {
    let label = spec.label();
    let candidates = &split.candidate_ids;
    let holdout = &split.heldout_ids;
    let options = spec.options();
    match spec {
        StrategySpec::TopK { k, .. } => {
            let r = select_top_k(oracle, candidates, holdout, *k, &options)?;
            committed(label, seed, r, oracle, tests)
        }
        StrategySpec::Greedy { .. } => {
            let r = select_greedy(oracle, candidates, holdout, &options)?;
            committed(label, seed, r, oracle, tests)
        }
        StrategySpec::Exhaustive { max_size, .. } => {
            let r = select_exhaustive(oracle, candidates, holdout, *max_size, &options)?;
            committed(label, seed, r, oracle, tests)
        }
        StrategySpec::Random { max_size } => {
            let r = select_random_baseline(oracle, candidates, holdout, *max_size)?;
            let on_test = score_subsets(oracle, candidates, tests, *max_size)?;
            Ok(CellOutcome {
                chosen_per_query: None,
                row: CellRow {
                    strategy: label,
                    seed,
                    chosen: None,
                    validation_utility: Some(r.mean.value()),
                    test_utility: mean_over(on_test.iter().map(|s| s.utility.value())),
                    set_evaluations: r.distribution.len() as u64,
                    oracle_calls: r.oracle_calls,
                },
            })
        }
        StrategySpec::Oracle { max_size } => {
            let counted = Counted::new(oracle);
            let best = brute_force_best(&counted, candidates, tests, *max_size)?;
            let cap = max_size.unwrap_or(candidates.len()).min(candidates.len());
            Ok(CellOutcome {
                chosen_per_query: Some(tests.iter().map(|&q| (q, best.set.clone())).collect()),
                row: CellRow {
                    strategy: label,
                    seed,
                    chosen: Some(best.set.raw()),
                    validation_utility: None,
                    test_utility: best.utility.value(),
                    set_evaluations: subset_count(candidates.len(), cap),
                    oracle_calls: counted.calls(),
                },
            })
        }
        StrategySpec::Nn { k } => {
            let pool = pool.ok_or_else(|| HarnessError::Config("nn strategy needs a manifest".into()))?;
            let feats = pool.features_for(candidates)?;
            let mut per_query = BTreeMap::new();
            let mut values = Vec::with_capacity(tests.len());
            for &q in tests {
                let qf = pool.features.get(&q).ok_or(HarnessError::MissingFeature(q))?;
                let set = select_nearest_neighbor(&feats, qf, *k)?;
                values.push(oracle.evaluate(&set, q)?.value());
                per_query.insert(q, set);
            }
            Ok(CellOutcome {
                chosen_per_query: Some(per_query),
                row: CellRow {
                    strategy: label,
                    seed,
                    chosen: None,
                    validation_utility: None,
                    test_utility: mean_over(values.into_iter()),
                    set_evaluations: 0,
                    oracle_calls: 0,
                },
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRank {
    pub strategy: String,
    pub histogram: RankHistogram,
    /// Share of queries whose set ranked first among all enumerated sets.
    pub top_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAnalysis {
    pub seed: u64,
    pub candidate_ids: Vec<u64>,
    pub candidate_sets: CandidateSets,
    pub coincidence: Coincidence,
    pub ranks: Vec<StrategyRank>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub config_hash: String,
    pub seeds: Vec<SeedAnalysis>,
    pub mean_fraction: f64,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("analysis serializes");
        s.push('\n');
        s
    }
}

pub fn run_analysis(config: &ExperimentConfig) -> Result<AnalysisReport, HarnessError> {
    let oracle = config.oracle.build(&config.base_dir)?;
    let pool = load_pool(config)?;
    run_analysis_with(config, oracle.as_ref(), pool.as_ref())
}

/// Per seed: the coincidence analysis over the split's candidates, and the
/// rank of every set-committing strategy's choice among all enumerated
/// subsets on each test query.
pub fn run_analysis_with(
    config: &ExperimentConfig,
    oracle: &dyn Evaluator,
    pool: Option<&Pool>,
) -> Result<AnalysisReport, HarnessError> {
    config.validate()?;
    let tests = config.test_queries.to_ids();
    let (outcomes, splits) = run_cells(config, oracle, pool)?;
    let per_seed = config.strategies.len();
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for (i, &seed) in config.seeds.iter().enumerate() {
        let candidates = &splits[&seed].candidate_ids;
        let candidate_sets: Vec<DemoSet> = match config.analysis.candidate_sets {
            CandidateSets::Singletons => candidates.iter().map(|&c| DemoSet::singleton(c)).collect(),
            CandidateSets::AllSubsets => enumerate_subsets(candidates, config.analysis.max_size)?.collect(),
        };
        let coincidence = coincidence_analysis(oracle, &candidate_sets, &tests)?;
        let all_sets: Vec<DemoSet> = enumerate_subsets(candidates, config.analysis.max_size)?.collect();
        let mut ranks = Vec::new();
        for o in &outcomes[i * per_seed..(i + 1) * per_seed] {
            let Some(chosen) = &o.chosen_per_query else { continue };
            let histogram = rank_frequency(oracle, chosen, &all_sets, &tests).map_err(|e| HarnessError::Cell {
                seed,
                strategy: o.row.strategy.clone(),
                source: Box::new(e),
            })?;
            ranks.push(StrategyRank {
                strategy: o.row.strategy.clone(),
                top_share: histogram.top_share(),
                histogram,
            });
        }
        seeds.push(SeedAnalysis {
            seed,
            candidate_ids: candidates.iter().map(|c| c.get()).collect(),
            candidate_sets: config.analysis.candidate_sets,
            coincidence,
            ranks,
        });
    }
    let mean_fraction = seeds.iter().map(|s| s.coincidence.fraction).sum::<f64>() / seeds.len() as f64;
    Ok(AnalysisReport {
        config_hash: config.hash(),
        seeds,
        mean_fraction,
    })
}
