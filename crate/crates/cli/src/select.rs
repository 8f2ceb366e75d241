use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use demoselect_core::harness::ingest_manifest;
use demoselect_core::oracle::{
    Evaluator, ExternalConfig, ExternalEvaluator, LandscapeParams, OneShotMatrix, SubsetTable,
    SyntheticLandscape,
};
use demoselect_core::select::{
    select_exhaustive, select_greedy, select_nearest_neighbor, select_random_baseline,
    select_top_k, HoldoutMode, SelectOptions,
};
use demoselect_core::split::make_split;
use demoselect_core::SampleId;
use serde_json::json;

use crate::ids::{parse_id_arg, IdArg};
use crate::{write_output, Failure, HoldoutArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleArg {
    Matrix,
    Table,
    Synthetic,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Topk,
    Greedy,
    Random,
    Exhaustive,
    Nn,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long, value_enum)]
    oracle: OracleArg,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Set size for topk and nn (required for both).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = HoldoutArg::Fixed)]
    holdout: HoldoutArg,
    /// Seed for the candidate split (used with --n-prime).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw this many candidates from the pool instead of using all of it.
    #[arg(long)]
    n_prime: Option<usize>,
    /// Candidate pool, e.g. `0..16` or `3,5,8` (default: the oracle's demo ids).
    #[arg(long, value_parser = parse_id_arg)]
    pool: Option<IdArg>,
    /// Validation queries (default: every id the oracle can score that is not
    /// a candidate in fixed mode, none in loocv mode).
    #[arg(long, value_parser = parse_id_arg)]
    queries: Option<IdArg>,
    /// Largest set size for random and exhaustive.
    #[arg(long)]
    max_size: Option<usize>,
    /// Greedy in loocv mode: rescore the current set on each step's query set.
    #[arg(long)]
    fair_loocv: bool,
    /// Top-K: rerun the argmax over the shrinking pool instead of sorting once.
    #[arg(long)]
    topk_loop: bool,
    /// Manifest with feature vectors (required for nn).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Landscape parameters written by `gen` (synthetic oracle).
    #[arg(long, value_name = "FILE")]
    landscape: Option<PathBuf>,
    /// One-shot matrix CSV (matrix oracle).
    #[arg(long, value_name = "FILE")]
    matrix: Option<PathBuf>,
    /// Subset table JSONL (table oracle).
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// Evaluator program and arguments, whitespace-separated (external oracle).
    #[arg(long, value_name = "CMD")]
    evaluator_cmd: Option<String>,
    /// Seconds to wait for each evaluator reply.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Where to write the JSON result.
    #[arg(long, value_name = "FILE", default_value = "selection.json")]
    out: PathBuf,
}

struct Backend {
    oracle: Box<dyn Evaluator>,
    demo_ids: Option<Vec<SampleId>>,
    query_ids: Option<Vec<SampleId>>,
}

fn require<'a, T>(v: &'a Option<T>, flag: &str, oracle: &str) -> Result<&'a T, Failure> {
    v.as_ref()
        .ok_or_else(|| Failure::usage(format!("--oracle {oracle} requires {flag}")))
}

fn backend(a: &SelectArgs) -> Result<Backend, Failure> {
    Ok(match a.oracle {
        OracleArg::Synthetic => {
            let path = require(&a.landscape, "--landscape", "synthetic")?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
            let params: LandscapeParams = serde_json::from_str(&text)
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            let land = SyntheticLandscape::new(params.clone())?;
            Backend {
                oracle: Box::new(land),
                demo_ids: Some(params.demo_ids()),
                query_ids: Some((0..params.total_ids() as u64).map(SampleId).collect()),
            }
        }
        OracleArg::Matrix => {
            let m = OneShotMatrix::load(require(&a.matrix, "--matrix", "matrix")?)?;
            Backend {
                demo_ids: Some(m.demo_ids().to_vec()),
                query_ids: Some(m.query_ids().to_vec()),
                oracle: Box::new(m),
            }
        }
        OracleArg::Table => {
            let t = SubsetTable::load(require(&a.table, "--table", "table")?)?;
            Backend {
                demo_ids: Some(t.demo_ids()),
                query_ids: Some(t.query_ids()),
                oracle: Box::new(t),
            }
        }
        OracleArg::External => {
            let cmd = require(&a.evaluator_cmd, "--evaluator-cmd", "external")?;
            let mut cfg = ExternalConfig::new(cmd.split_whitespace().map(String::from).collect());
            if !(a.timeout.is_finite() && a.timeout > 0.0) {
                return Err(Failure::usage("--timeout must be positive"));
            }
            cfg.timeout_secs = a.timeout;
            Backend {
                oracle: Box::new(ExternalEvaluator::spawn(&cfg)?),
                demo_ids: None,
                query_ids: None,
            }
        }
    })
}

pub fn run(a: SelectArgs) -> Result<(), Failure> {
    if matches!(a.strategy, StrategyArg::Topk | StrategyArg::Nn) && a.k.is_none() {
        return Err(Failure::usage(format!(
            "--strategy {} requires --k\n\nUsage: demoselect select --oracle <ORACLE> --strategy <STRATEGY> --k <K> [OPTIONS]",
            if a.strategy == StrategyArg::Topk { "topk" } else { "nn" }
        )));
    }
    if a.strategy == StrategyArg::Nn && a.manifest.is_none() {
        return Err(Failure::usage("--strategy nn requires --manifest with features"));
    }
    let mode = match a.holdout {
        HoldoutArg::Fixed => HoldoutMode::Fixed,
        HoldoutArg::Loocv => HoldoutMode::Loocv,
    };
    let Backend {
        oracle,
        demo_ids,
        query_ids,
    } = backend(&a)?;

    let pool = match (&a.pool, demo_ids) {
        (Some(p), _) => p.0.clone(),
        (None, Some(d)) => d,
        (None, None) => return Err(Failure::usage("--oracle external requires --pool")),
    };
    let candidates = match a.n_prime {
        Some(n) => make_split(&pool, n, a.seed).map_err(|e| Failure::usage(e.to_string()))?.candidate_ids,
        None => pool,
    };
    let holdout = match (&a.queries, mode) {
        (Some(q), _) => q.0.clone(),
        (None, HoldoutMode::Loocv) => Vec::new(),
        (None, HoldoutMode::Fixed) => query_ids
            .ok_or_else(|| Failure::usage("--oracle external in fixed mode requires --queries"))?
            .into_iter()
            .filter(|q| !candidates.contains(q))
            .collect(),
    };
    let options = SelectOptions {
        holdout: mode,
        fair_loocv: a.fair_loocv,
        topk_loop: a.topk_loop,
    };
    let raw = |v: &[SampleId]| v.iter().map(|x| x.get()).collect::<Vec<_>>();
    let header = json!({
        "oracle": format!("{:?}", a.oracle).to_lowercase(),
        "candidates": raw(&candidates),
        "queries": raw(&holdout),
        "holdout_mode": mode,
    });

    let (summary, result) = match a.strategy {
        StrategyArg::Random => {
            if mode == HoldoutMode::Loocv {
                return Err(Failure::usage("random baseline supports only --holdout fixed"));
            }
            let r = select_random_baseline(oracle.as_ref(), &candidates, &holdout, a.max_size)?;
            let summary = vec![
                ("strategy".to_string(), "random".to_string()),
                ("subsets".into(), r.distribution.len().to_string()),
                ("mean utility".into(), r.mean.value().to_string()),
                ("oracle calls".into(), r.oracle_calls.to_string()),
            ];
            (summary, serde_json::to_value(&r).expect("serializes"))
        }
        StrategyArg::Nn => {
            let pool = ingest_manifest(a.manifest.as_ref().expect("checked above"))?;
            let feats = pool.features_for(&candidates)?;
            let k = a.k.expect("checked above");
            let mut per_query = BTreeMap::new();
            for &q in &holdout {
                let qf = pool
                    .features
                    .get(&q)
                    .ok_or_else(|| Failure::data(format!("no feature vector for query {q}")))?;
                per_query.insert(q.get().to_string(), select_nearest_neighbor(&feats, qf, k)?);
            }
            let summary = vec![
                ("strategy".to_string(), format!("nn(k={k})")),
                ("queries".into(), per_query.len().to_string()),
                ("oracle calls".into(), "0".into()),
            ];
            (summary, json!({ "strategy": "nn", "k": k, "per_query": per_query }))
        }
        s => {
            let r = match s {
                StrategyArg::Topk => select_top_k(oracle.as_ref(), &candidates, &holdout, a.k.expect("checked"), &options)?,
                StrategyArg::Greedy => select_greedy(oracle.as_ref(), &candidates, &holdout, &options)?,
                _ => select_exhaustive(oracle.as_ref(), &candidates, &holdout, a.max_size, &options)?,
            };
            let summary = vec![
                ("strategy".to_string(), format!("{} ({} holdout)", r.strategy, r.holdout_mode)),
                ("chosen".into(), r.chosen.to_string()),
                (
                    "validation utility".into(),
                    r.validation_utility.map(|u| u.value().to_string()).unwrap_or_else(|| "-".into()),
                ),
                ("set evaluations".into(), r.set_evaluations.to_string()),
                ("oracle calls".into(), r.oracle_calls.to_string()),
            ];
            (summary, serde_json::to_value(&r).expect("serializes"))
        }
    };
    drop(oracle);

    let mut doc = header;
    doc["result"] = result;
    let text = serde_json::to_string_pretty(&doc).expect("serializes") + "\n";
    write_output(&a.out, &text)?;
    println!("candidates: {}, validation queries: {}", candidates.len(), holdout.len());
    for (k, v) in summary {
        println!("{k}: {v}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
