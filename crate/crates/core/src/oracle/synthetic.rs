//! Seeded synthetic score landscape.
//!
//! Demo ids are `0..n_demos`; query-block ids are `n_demos..n_demos+n_queries`.
//! The base matrix has a column for every id in both blocks so that pool
//! members can also act as validation queries.
//!
//! ```text
//! u(P, q) = AGG_{i∈P} A[i,q] + λ · mean_{i<j∈P} B[i,j] + σ · η(P, q, seed)
//! ```
//!
//! Generation order from one SplitMix64 stream seeded with `seed`:
//! `A` row-major with entries uniform in `[0.2, 0.6)`, then the strict upper
//! triangle of `B` row-major uniform in `[-1, 1)`, then the planted query
//! columns by partial Fisher-Yates over the query block.

use serde::{Deserialize, Serialize};

use super::{CallCounter, Evaluator, OracleError};
use crate::ids::{DemoSet, SampleId};
use crate::rng::{mix64, SeededRng};
use crate::utility::{MetricTag, Utility};

pub const BASE_LOW: f64 = 0.2;
pub const BASE_HIGH: f64 = 0.6;
const NOISE_SALT: u64 = 0xa076_1d64_78bd_642f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Sum,
    Mean,
}

/// One demo that dominates a fraction of the query columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub demo_index: usize,
    pub gamma: f64,
    pub high_value: f64,
}

impl Planted {
    /// `⌈γ · n_queries⌉`, with a small slack so that products such as
    /// `0.7 × 10` do not round up past the intended integer.
    pub fn column_count(&self, n_queries: usize) -> usize {
        ((self.gamma * n_queries as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeParams {
    pub n_demos: usize,
    pub n_queries: usize,
    pub seed: u64,
    pub aggregator: Aggregator,
    /// λ
    pub interaction_scale: f64,
    /// σ
    pub noise_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Planted>,
}

impl LandscapeParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidParams(m));
        if self.n_demos == 0 {
            return bad("n_demos must be positive".into());
        }
        if !(self.interaction_scale.is_finite() && self.interaction_scale >= 0.0) {
            return bad(format!("interaction scale {} must be >= 0", self.interaction_scale));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad(format!("noise scale {} must be >= 0", self.noise_scale));
        }
        if let Some(p) = &self.planted {
            if p.demo_index >= self.n_demos {
                return bad(format!("planted demo {} >= n_demos {}", p.demo_index, self.n_demos));
            }
            if !(p.gamma > 0.0 && p.gamma <= 1.0) {
                return bad(format!("planted gamma {} outside (0,1]", p.gamma));
            }
            if !(p.high_value.is_finite() && p.high_value > BASE_HIGH) {
                return bad(format!(
                    "planted high value {} must exceed the base upper bound {BASE_HIGH}",
                    p.high_value
                ));
            }
        }
        Ok(())
    }

    pub fn total_ids(&self) -> usize {
        self.n_demos + self.n_queries
    }

    pub fn demo_ids(&self) -> Vec<SampleId> {
        (0..self.n_demos as u64).map(SampleId).collect()
    }

    pub fn query_ids(&self) -> Vec<SampleId> {
        (self.n_demos as u64..self.total_ids() as u64).map(SampleId).collect()
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }
}

#[derive(Debug)]
pub struct SyntheticLandscape {
    params: LandscapeParams,
    base: Grid,
    interaction: Grid,
    planted_columns: Vec<SampleId>,
    counter: CallCounter,
}

impl SyntheticLandscape {
    pub fn new(params: LandscapeParams) -> Result<Self, OracleError> {
        params.validate()?;
        let n = params.n_demos;
        let cols = params.total_ids();
        let mut rng = SeededRng::new(params.seed);

        let mut base = Grid::zeros(n, cols);
        for i in 0..n {
            for c in 0..cols {
                base.set(i, c, rng.uniform(BASE_LOW, BASE_HIGH));
            }
        }

        let mut interaction = Grid::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.uniform(-1.0, 1.0);
                interaction.set(i, j, v);
                interaction.set(j, i, v);
            }
        }

        let mut planted_columns = Vec::new();
        if let Some(p) = &params.planted {
            let mut block = params.query_ids();
            let k = p.column_count(block.len());
            rng.partial_shuffle(&mut block, k);
            planted_columns = block[..k].to_vec();
            planted_columns.sort_unstable();
            for q in &planted_columns {
                base.set(p.demo_index, q.0 as usize, p.high_value);
            }
        }

        Ok(SyntheticLandscape {
            params,
            base,
            interaction,
            planted_columns,
            counter: CallCounter::default(),
        })
    }

    pub fn params(&self) -> &LandscapeParams {
        &self.params
    }

    /// `A`, indexed `[demo, column id]`.
    pub fn base_matrix(&self) -> &Grid {
        &self.base
    }

    /// `B`, symmetric with zero diagonal.
    pub fn interaction_matrix(&self) -> &Grid {
        &self.interaction
    }

    pub fn planted_columns(&self) -> &[SampleId] {
        &self.planted_columns
    }

    /// Deterministic pseudo-noise in `[-1, 1)` for `(demos, query, seed)`.
    pub fn noise(&self, demos: &DemoSet, query: SampleId) -> f64 {
        let mut h = mix64(self.params.seed ^ NOISE_SALT);
        h = mix64(h ^ query.0);
        h = mix64(h ^ demos.len() as u64);
        for id in demos.iter() {
            h = mix64(h ^ id.0);
        }
        (h >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
    }

    fn score(&self, demos: &DemoSet, query: SampleId) -> Result<f64, OracleError> {
        if demos.is_empty() {
            return Err(OracleError::EmptyDemoSet);
        }
        let q = query.0 as usize;
        if q >= self.params.total_ids() {
            return Err(OracleError::IndexOutOfRange {
                id: query,
                what: "synthetic query",
            });
        }
        let mut agg = 0.0;
        for id in demos.iter() {
            let i = id.0 as usize;
            if i >= self.params.n_demos {
                return Err(OracleError::IndexOutOfRange {
                    id,
                    what: "synthetic demo",
                });
            }
            agg += self.base.get(i, q);
        }
        if self.params.aggregator == Aggregator::Mean {
            agg /= demos.len() as f64;
        }
        let mut u = agg;
        if self.params.interaction_scale != 0.0 && demos.len() > 1 {
            let m = demos.members();
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for a in 0..m.len() {
                for b in a + 1..m.len() {
                    sum += self.interaction.get(m[a].0 as usize, m[b].0 as usize);
                    pairs += 1;
                }
            }
            u += self.params.interaction_scale * (sum / pairs as f64);
        }
        if self.params.noise_scale != 0.0 {
            u += self.params.noise_scale * self.noise(demos, query);
        }
        Ok(u)
    }
}

impl Evaluator for SyntheticLandscape {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        self.counter.tick();
        let u = self.score(demos, query)?;
        Ok(Utility::new(u, MetricTag::Synthetic)?)
    }

    fn calls(&self) -> u64 {
        self.counter.get()
    }
}
