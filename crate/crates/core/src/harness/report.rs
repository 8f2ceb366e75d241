use std::fmt::Write as _;

use serde::Serialize;

use super::config::StrategySpec;
use crate::subsets::subset_count;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// One (seed, strategy) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub strategy: String,
    pub seed: u64,
    /// `None` when the strategy has no single set (random, nn).
    pub chosen: Option<Vec<u64>>,
    pub validation_utility: Option<f64>,
    pub test_utility: f64,
    pub set_evaluations: u64,
    pub oracle_calls: u64,
}

/// Mean and sample standard deviation over seeds for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub seeds: usize,
    pub validation_mean: Option<f64>,
    pub validation_std: Option<f64>,
    pub test_mean: f64,
    pub test_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub strategy: String,
    pub seed: u64,
    pub n_prime: usize,
    pub set_evaluations: u64,
    pub bound: u64,
    pub formula: String,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub report_format: u32,
    pub manifest_format: u32,
    pub protocol_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config_hash: String,
    pub provenance: Provenance,
    pub pool_size: usize,
    pub n_prime: usize,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySpec>,
    /// Seed-major, then strategies in config order.
    pub rows: Vec<CellRow>,
    pub aggregates: Vec<AggregateRow>,
    pub audit: Vec<AuditRow>,
    #[serde(skip)]
    pub display_scale: f64,
}

impl Report {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Worst-case set-evaluation count for a strategy at pool size `n_prime`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallBound {
    pub bound: u64,
    pub formula: String,
}

pub fn call_bound(spec: &StrategySpec, n_prime: usize) -> CallBound {
    let n = n_prime as u64;
    let subsets = |max: &Option<usize>| match max {
        None => CallBound {
            bound: subset_count(n_prime, n_prime),
            formula: "2^N' - 1".into(),
        },
        Some(m) => CallBound {
            bound: subset_count(n_prime, (*m).min(n_prime)),
            formula: format!("sum_{{k<={m}}} C(N',k)"),
        },
    };
    match spec {
        StrategySpec::TopK {
            k, loop_argmax: true, ..
        } => {
            let k = *k as u64;
            CallBound {
                bound: k * n - k * (k - 1) / 2,
                formula: "K*N' - K(K-1)/2".into(),
            }
        }
        StrategySpec::TopK { .. } => CallBound {
            bound: n,
            formula: "N'".into(),
        },
        StrategySpec::Greedy { .. } => CallBound {
            bound: n * (n + 1) / 2,
            formula: "N'(N'+1)/2".into(),
        },
        StrategySpec::Random { max_size }
        | StrategySpec::Exhaustive { max_size, .. }
        | StrategySpec::Oracle { max_size } => subsets(max_size),
        StrategySpec::Nn { .. } => CallBound {
            bound: 0,
            formula: "0".into(),
        },
    }
}

/// Measured set evaluations next to each strategy's structural bound.
pub fn audit_calls(report: &Report) -> Vec<AuditRow> {
    report
        .rows
        .iter()
        .map(|row| {
            let spec = report
                .strategies
                .iter()
                .find(|s| s.label() == row.strategy)
                .expect("every row comes from a configured strategy");
            let b = call_bound(spec, report.n_prime);
            AuditRow {
                strategy: row.strategy.clone(),
                seed: row.seed,
                n_prime: report.n_prime,
                set_evaluations: row.set_evaluations,
                bound: b.bound,
                formula: b.formula,
                within_bound: row.set_evaluations <= b.bound,
            }
        })
        .collect()
}

/// Sample mean and (n−1) standard deviation; the latter is `None` for one
/// value.
pub(crate) fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (n - 1.0)).sqrt()))
}

pub(crate) fn aggregate(rows: &[CellRow], labels: &[String]) -> Vec<AggregateRow> {
    labels
        .iter()
        .map(|label| {
            let mine: Vec<&CellRow> = rows.iter().filter(|r| &r.strategy == label).collect();
            let test: Vec<f64> = mine.iter().map(|r| r.test_utility).collect();
            let val: Option<Vec<f64>> = mine.iter().map(|r| r.validation_utility).collect();
            let (test_mean, test_std) = mean_std(&test);
            let (validation_mean, validation_std) = match val {
                Some(v) => {
                    let (m, s) = mean_std(&v);
                    (Some(m), s)
                }
                None => (None, None),
            };
            AggregateRow {
                strategy: label.clone(),
                seeds: mine.len(),
                validation_mean,
                validation_std,
                test_mean,
                test_std,
            }
        })
        .collect()
}

fn cell(mean: Option<f64>, std: Option<f64>, scale: f64) -> String {
    match (mean, std) {
        (None, _) => "-".into(),
        (Some(m), None) => format!("{:.2}", m * scale),
        (Some(m), Some(s)) => format!("{:.2} ± {:.2}", m * scale, s * scale),
    }
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for r in rows {
        line(&mut r.iter().map(String::as_str));
    }
    out
}

/// Human-readable mean ± std table, two decimals.
pub fn render_table(report: &Report) -> String {
    let scale = report.display_scale;
    let rows: Vec<Vec<String>> = report
        .aggregates
        .iter()
        .map(|a| {
            vec![
                a.strategy.clone(),
                a.seeds.to_string(),
                cell(a.validation_mean, a.validation_std, scale),
                cell(Some(a.test_mean), a.test_std, scale),
            ]
        })
        .collect();
    table(&["strategy", "seeds", "validation", "test"], &rows)
}

pub fn render_audit(audit: &[AuditRow]) -> String {
    let rows: Vec<Vec<String>> = audit
        .iter()
        .map(|a| {
            vec![
                a.strategy.clone(),
                a.seed.to_string(),
                a.n_prime.to_string(),
                a.set_evaluations.to_string(),
                a.bound.to_string(),
                a.formula.clone(),
                if a.within_bound { "ok" } else { "EXCEEDED" }.into(),
            ]
        })
        .collect();
    table(&["strategy", "seed", "N'", "set-evals", "bound", "formula", "status"], &rows)
}
