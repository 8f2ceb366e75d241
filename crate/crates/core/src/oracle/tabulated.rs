//! File-backed evaluators: the one-shot matrix and the subset table.
//!
//! One-shot matrix (CSV): header `demo\query,<query id>,...`, then one row per
//! demo id with its utilities. Subset table (JSON lines):
//! `{"set":[ids ascending],"query":id,"utility":number}`. Both files hold
//! higher-is-better utilities.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CallCounter, Evaluator, OracleError};
use crate::ids::{DemoSet, SampleId};
use crate::utility::{MetricTag, Utility};

pub const MATRIX_CORNER: &str = "demo\\query";

fn parse_err(path: &Path, message: impl Into<String>) -> OracleError {
    OracleError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> OracleError {
    OracleError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Utilities of every single demonstration against every query.
#[derive(Debug)]
pub struct OneShotMatrix {
    demo_ids: Vec<SampleId>,
    query_ids: Vec<SampleId>,
    values: Vec<f64>,
    demo_index: HashMap<SampleId, usize>,
    query_index: HashMap<SampleId, usize>,
    metric: MetricTag,
    counter: CallCounter,
}

impl OneShotMatrix {
    /// `values` is row-major, one row per demo.
    pub fn new(
        demo_ids: Vec<SampleId>,
        query_ids: Vec<SampleId>,
        values: Vec<f64>,
    ) -> Result<Self, OracleError> {
        let invalid = |m: String| OracleError::InvalidParams(m);
        if values.len() != demo_ids.len() * query_ids.len() {
            return Err(invalid(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                demo_ids.len(),
                query_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite utility {v}")));
        }
        let demo_index = index_unique(&demo_ids).map_err(|id| invalid(format!("duplicate demo id {id}")))?;
        let query_index =
            index_unique(&query_ids).map_err(|id| invalid(format!("duplicate query id {id}")))?;
        Ok(OneShotMatrix {
            demo_ids,
            query_ids,
            values,
            demo_index,
            query_index,
            metric: MetricTag::External,
            counter: CallCounter::default(),
        })
    }

    pub fn with_metric(mut self, metric: MetricTag) -> Self {
        self.metric = metric;
        self
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| parse_err(path, e.to_string()))?,
            None => return Err(parse_err(path, "empty file")),
        };
        if header.get(0) != Some(MATRIX_CORNER) {
            return Err(parse_err(
                path,
                format!("line 1: first header cell must be {MATRIX_CORNER:?}"),
            ));
        }
        let query_ids = header
            .iter()
            .skip(1)
            .map(|cell| parse_id(cell).map_err(|m| parse_err(path, format!("line 1: {m}"))))
            .collect::<Result<Vec<_>, _>>()?;

        let mut demo_ids = Vec::new();
        let mut values = Vec::new();
        for (row, record) in records.enumerate() {
            let line = row + 2;
            let record = record.map_err(|e| parse_err(path, format!("line {line}: {e}")))?;
            if record.len() != query_ids.len() + 1 {
                return Err(parse_err(
                    path,
                    format!("line {line}: expected {} cells, found {}", query_ids.len() + 1, record.len()),
                ));
            }
            demo_ids.push(parse_id(&record[0]).map_err(|m| parse_err(path, format!("line {line}: {m}")))?);
            for cell in record.iter().skip(1) {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {line}: bad utility {cell:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(path, format!("line {line}: non-finite utility {cell:?}")));
                }
                values.push(v);
            }
        }
        OneShotMatrix::new(demo_ids, query_ids, values).map_err(|e| parse_err(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), OracleError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut out = BufWriter::new(file);
        let mut line = String::from(MATRIX_CORNER);
        for q in &self.query_ids {
            line.push_str(&format!(",{q}"));
        }
        writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
        for (r, d) in self.demo_ids.iter().enumerate() {
            let mut line = d.to_string();
            for c in 0..self.query_ids.len() {
                line.push_str(&format!(",{}", self.values[r * self.query_ids.len() + c]));
            }
            writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
        }
        out.flush().map_err(|e| io_err(path, e))
    }

    pub fn demo_ids(&self) -> &[SampleId] {
        &self.demo_ids
    }

    pub fn query_ids(&self) -> &[SampleId] {
        &self.query_ids
    }

    pub fn get(&self, demo: SampleId, query: SampleId) -> Option<f64> {
        let r = *self.demo_index.get(&demo)?;
        let c = *self.query_index.get(&query)?;
        Some(self.values[r * self.query_ids.len() + c])
    }
}

impl Evaluator for OneShotMatrix {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        self.counter.tick();
        match demos.len() {
            0 => Err(OracleError::EmptyDemoSet),
            1 => {
                let v = self.get(demos.members()[0], query).ok_or_else(|| OracleError::MissingEntry {
                    demos: demos.clone(),
                    query,
                })?;
                Ok(Utility::new(v, self.metric)?)
            }
            n => Err(OracleError::CardinalityUnsupported(n)),
        }
    }

    fn calls(&self) -> u64 {
        self.counter.get()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TableLine {
    set: Vec<SampleId>,
    query: SampleId,
    utility: f64,
}

/// Precomputed utilities keyed by (canonical set, query). Missing keys are
/// errors, never defaults.
#[derive(Debug, Default)]
pub struct SubsetTable {
    entries: HashMap<(DemoSet, SampleId), Utility>,
    counter: CallCounter,
}

impl SubsetTable {
    pub fn from_entries<I>(entries: I) -> Result<Self, OracleError>
    where
        I: IntoIterator<Item = ((DemoSet, SampleId), Utility)>,
    {
        let mut table = SubsetTable::default();
        for (key, u) in entries {
            if key.0.is_empty() {
                return Err(OracleError::EmptyDemoSet);
            }
            if table.entries.insert(key.clone(), u).is_some() {
                return Err(OracleError::InvalidParams(format!(
                    "duplicate entry for {} at query {}",
                    key.0, key.1
                )));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        Self::load_with_metric(path, MetricTag::External)
    }

    pub fn load_with_metric(path: &Path, metric: MetricTag) -> Result<Self, OracleError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut table = SubsetTable::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| io_err(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TableLine = serde_json::from_str(&line)
                .map_err(|e| parse_err(path, format!("line {n}: {e}")))?;
            if !rec.set.windows(2).all(|w| w[0] < w[1]) {
                return Err(parse_err(path, format!("line {n}: set must be strictly ascending")));
            }
            if rec.set.is_empty() {
                return Err(parse_err(path, format!("line {n}: empty set")));
            }
            let u = Utility::new(rec.utility, metric)
                .map_err(|e| parse_err(path, format!("line {n}: {e}")))?;
            let key = (DemoSet::canonicalize(rec.set), rec.query);
            if table.entries.insert(key, u).is_some() {
                return Err(parse_err(path, format!("line {n}: duplicate entry")));
            }
        }
        Ok(table)
    }

    /// Writes entries sorted by (set size, set, query).
    pub fn write(&self, path: &Path) -> Result<(), OracleError> {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort_by(|a, b| (a.0.len(), &a.0, a.1).cmp(&(b.0.len(), &b.0, b.1)));
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut out = BufWriter::new(file);
        for key in keys {
            let line = TableLine {
                set: key.0.members().to_vec(),
                query: key.1,
                utility: self.entries[key].value(),
            };
            let json = serde_json::to_string(&line).expect("table line serialises");
            writeln!(out, "{json}").map_err(|e| io_err(path, e))?;
        }
        out.flush().map_err(|e| io_err(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Demo ids that appear in at least one entry's set, ascending.
    pub fn demo_ids(&self) -> Vec<SampleId> {
        let mut d: Vec<_> = self.entries.keys().flat_map(|k| k.0.iter()).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// Query ids that appear in at least one entry, ascending.
    pub fn query_ids(&self) -> Vec<SampleId> {
        let mut q: Vec<_> = self.entries.keys().map(|k| k.1).collect();
        q.sort_unstable();
        q.dedup();
        q
    }
}

impl Evaluator for SubsetTable {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        self.counter.tick();
        if demos.is_empty() {
            return Err(OracleError::EmptyDemoSet);
        }
        self.entries
            .get(&(demos.clone(), query))
            .copied()
            .ok_or_else(|| OracleError::MissingEntry {
                demos: demos.clone(),
                query,
            })
    }

    fn calls(&self) -> u64 {
        self.counter.get()
    }
}

fn parse_id(cell: &str) -> Result<SampleId, String> {
    cell.trim()
        .parse::<u64>()
        .map(SampleId)
        .map_err(|_| format!("bad id {cell:?}"))
}

fn index_unique(ids: &[SampleId]) -> Result<HashMap<SampleId, usize>, SampleId> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(id);
        }
    }
    Ok(index)
}
