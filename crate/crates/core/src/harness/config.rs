use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::ids::SampleId;
use crate::oracle::{
    Evaluator, ExternalConfig, ExternalEvaluator, LandscapeParams, OneShotMatrix, SubsetTable,
    SyntheticLandscape,
};
use crate::select::{HoldoutMode, SelectOptions};
use crate::utility::MetricTag;

/// Explicit id list or half-open range `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdList {
    List(Vec<u64>),
    Range { start: u64, end: u64 },
}

impl IdList {
    pub fn to_ids(&self) -> Vec<SampleId> {
        match self {
            IdList::List(v) => v.iter().copied().map(SampleId).collect(),
            IdList::Range { start, end } => (*start..*end).map(SampleId).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Synthetic {
        params: LandscapeParams,
    },
    Matrix {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<MetricTag>,
    },
    Table {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<MetricTag>,
    },
    External {
        command: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_secs: Option<f64>,
    },
}

impl OracleSpec {
    /// Instantiates the backend. Relative paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Box<dyn Evaluator>, HarnessError> {
        Ok(match self {
            OracleSpec::Synthetic { params } => Box::new(SyntheticLandscape::new(params.clone())?),
            OracleSpec::Matrix { path, metric } => {
                let m = OneShotMatrix::load(&base.join(path))?;
                Box::new(match metric {
                    Some(t) => m.with_metric(*t),
                    None => m,
                })
            }
            OracleSpec::Table { path, metric } => {
                let path = base.join(path);
                Box::new(match metric {
                    Some(t) => SubsetTable::load_with_metric(&path, *t)?,
                    None => SubsetTable::load(&path)?,
                })
            }
            OracleSpec::External {
                command,
                timeout_secs,
            } => {
                let mut cfg = ExternalConfig::new(command.clone());
                if let Some(t) = timeout_secs {
                    cfg.timeout_secs = *t;
                }
                Box::new(ExternalEvaluator::spawn(&cfg)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    #[serde(rename = "topk", alias = "top_k")]
    TopK {
        k: usize,
        #[serde(default)]
        holdout: HoldoutMode,
        #[serde(default)]
        loop_argmax: bool,
    },
    Greedy {
        #[serde(default)]
        holdout: HoldoutMode,
        #[serde(default)]
        fair_loocv: bool,
    },
    /// Mean over every subset of the candidates.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_size: Option<usize>,
    },
    /// Best subset on the validation queries.
    Exhaustive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_size: Option<usize>,
        #[serde(default)]
        holdout: HoldoutMode,
    },
    /// Best subset on the test queries themselves; an upper bound for any
    /// task-level selection.
    Oracle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_size: Option<usize>,
    },
    /// Per-query cosine retrieval over manifest features.
    Nn { k: usize },
}

impl StrategySpec {
    /// Row label, unique per distinct configuration.
    pub fn label(&self) -> String {
        let mode = |h: &HoldoutMode| match h {
            HoldoutMode::Fixed => String::new(),
            HoldoutMode::Loocv => ",loocv".to_string(),
        };
        let cap = |m: &Option<usize>| m.map(|m| format!("(max={m})")).unwrap_or_default();
        match self {
            StrategySpec::TopK {
                k,
                holdout,
                loop_argmax,
            } => format!(
                "topk(k={k}{}{})",
                mode(holdout),
                if *loop_argmax { ",loop" } else { "" }
            ),
            StrategySpec::Greedy {
                holdout,
                fair_loocv,
            } => {
                let inner = format!("{}{}", mode(holdout), if *fair_loocv { ",fair" } else { "" });
                if inner.is_empty() {
                    "greedy".into()
                } else {
                    format!("greedy({})", &inner[1..])
                }
            }
            StrategySpec::Random { max_size } => format!("random{}", cap(max_size)),
            StrategySpec::Exhaustive { max_size, holdout } => {
                let mut s = format!("exhaustive{}", cap(max_size));
                if *holdout == HoldoutMode::Loocv {
                    s.push_str("(loocv)");
                }
                s
            }
            StrategySpec::Oracle { max_size } => format!("oracle{}", cap(max_size)),
            StrategySpec::Nn { k } => format!("nn(k={k})"),
        }
    }

    pub fn options(&self) -> SelectOptions {
        match self {
            StrategySpec::TopK {
                holdout,
                loop_argmax,
                ..
            } => SelectOptions {
                holdout: *holdout,
                topk_loop: *loop_argmax,
                ..Default::default()
            },
            StrategySpec::Greedy {
                holdout,
                fair_loocv,
            } => SelectOptions {
                holdout: *holdout,
                fair_loocv: *fair_loocv,
                ..Default::default()
            },
            StrategySpec::Exhaustive { holdout, .. } => SelectOptions {
                holdout: *holdout,
                ..Default::default()
            },
            _ => SelectOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSets {
    #[default]
    Singletons,
    AllSubsets,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Candidate sets for the coincidence analysis.
    #[serde(default)]
    pub candidate_sets: CandidateSets,
    /// Size cap for the enumeration used by rank-frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub oracle: OracleSpec,
    /// Pool size N; the pool is ids `0..N` unless `pool_ids` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_ids: Option<IdList>,
    /// Candidate count N'; the other N − N' pool members are the validation
    /// queries.
    pub n_prime: usize,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySpec>,
    pub test_queries: IdList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Multiplier applied to utilities in the human table only (e.g. 100 for
    /// percent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_scale: Option<f64>,
    /// Directory that relative paths resolve against; set by [`Self::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pool(&self) -> Result<Vec<SampleId>, HarnessError> {
        match (&self.pool_ids, self.pool_size) {
            (Some(ids), size) => {
                let ids = ids.to_ids();
                if let Some(n) = size {
                    if n != ids.len() {
                        return Err(HarnessError::Config(format!(
                            "pool_size {n} disagrees with {} pool_ids",
                            ids.len()
                        )));
                    }
                }
                Ok(ids)
            }
            (None, Some(n)) => Ok((0..n as u64).map(SampleId).collect()),
            (None, None) => Err(HarnessError::Config("one of pool_size or pool_ids is required".into())),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.strategies.is_empty() {
            return bad("strategies must be non-empty".into());
        }
        let pool = self.pool()?;
        let mut sorted = pool.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != pool.len() {
            return bad("pool ids contain duplicates".into());
        }
        if self.n_prime == 0 || self.n_prime >= pool.len() {
            return bad(format!("n_prime {} must satisfy 1 <= N' < N = {}", self.n_prime, pool.len()));
        }
        let tests = self.test_queries.to_ids();
        if tests.is_empty() {
            return bad("test_queries must be non-empty".into());
        }
        if let Some(t) = tests.iter().find(|t| sorted.binary_search(t).is_ok()) {
            return bad(format!("test query {t} is also in the pool"));
        }
        let mut labels = Vec::new();
        for s in &self.strategies {
            match s {
                StrategySpec::TopK { k, .. } | StrategySpec::Nn { k } if *k == 0 || *k > self.n_prime => {
                    return bad(format!("{}: k must be in 1..={}", s.label(), self.n_prime));
                }
                StrategySpec::Nn { .. } if self.manifest.is_none() => {
                    return bad("nn strategy needs a manifest with features".into());
                }
                _ => {}
            }
            let label = s.label();
            if labels.contains(&label) {
                return bad(format!("strategy {label} listed twice"));
            }
            labels.push(label);
        }
        if let Some(scale) = self.display_scale {
            if !(scale.is_finite() && scale > 0.0) {
                return bad(format!("display_scale {scale} must be positive"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "oracle": {"backend": "synthetic", "params": {
                "n_demos": 16, "n_queries": 20, "seed": 1, "aggregator": "sum",
                "interaction_scale": 0.5, "noise_scale": 0.1
            }},
            "pool_size": 16,
            "n_prime": 6,
            "seeds": [0, 1, 2],
            "strategies": [{"kind": "topk", "k": 1}, {"kind": "greedy"}],
            "test_queries": {"start": 16, "end": 36}
        })
    }

    fn parse(v: serde_json::Value) -> Result<ExperimentConfig, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn parses_minimal() {
        let cfg = parse(minimal()).unwrap();
        assert_eq!(cfg.pool().unwrap().len(), 16);
        assert_eq!(cfg.test_queries.to_ids().len(), 20);
        assert_eq!(cfg.strategies[0].label(), "topk(k=1)");
        assert_eq!(cfg.strategies[1].label(), "greedy");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut v = minimal();
        v["seeds"] = serde_json::json!([]);
        assert!(matches!(parse(v), Err(HarnessError::Config(_))));
        let mut v = minimal();
        v["n_prime"] = serde_json::json!(16);
        assert!(parse(v).is_err());
        let mut v = minimal();
        v["test_queries"] = serde_json::json!([3, 17]);
        assert!(parse(v).is_err());
        let mut v = minimal();
        v["strategies"] = serde_json::json!([{"kind": "top_k", "k": 7}]);
        assert!(parse(v).is_err());
        let mut v = minimal();
        v["strategies"] = serde_json::json!([{"kind": "greedy"}, {"kind": "greedy"}]);
        assert!(parse(v).is_err());
        let mut v = minimal();
        v["surprise"] = serde_json::json!(1);
        assert!(parse(v).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse(minimal()).unwrap();
        let b = parse(minimal()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut v = minimal();
        v["seeds"] = serde_json::json!([0, 1]);
        assert_ne!(a.hash(), parse(v).unwrap().hash());
    }

    #[test]
    fn labels_distinguish_options() {
        let a = StrategySpec::Greedy {
            holdout: HoldoutMode::Loocv,
            fair_loocv: true,
        };
        assert_eq!(a.label(), "greedy(loocv,fair)");
        let b = StrategySpec::TopK {
            k: 2,
            holdout: HoldoutMode::Loocv,
            loop_argmax: true,
        };
        assert_eq!(b.label(), "topk(k=2,loocv,loop)");
        assert_eq!(StrategySpec::Random { max_size: Some(2) }.label(), "random(max=2)");
    }
}
