//! Canonical higher-is-better scores.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which metric a utility was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    Iou,
    NegMse,
    Synthetic,
    External,
}

/// Orientation of a raw score. Utilities are always stored higher-is-better;
/// the lower-is-better variant only appears at ingestion boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("utility value {0} is not finite")]
pub struct NonFinite(pub f64);

/// A finite, higher-is-better score with its metric provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    value: f64,
    source_metric: MetricTag,
}

impl Utility {
    pub fn new(value: f64, source_metric: MetricTag) -> Result<Self, NonFinite> {
        if value.is_finite() {
            Ok(Utility {
                value,
                source_metric,
            })
        } else {
            Err(NonFinite(value))
        }
    }

    /// Converts a raw score with the given orientation. Losses are negated.
    pub fn from_score(
        score: f64,
        orientation: Orientation,
        source_metric: MetricTag,
    ) -> Result<Self, NonFinite> {
        match orientation {
            Orientation::HigherBetter => Utility::new(score, source_metric),
            Orientation::LowerBetter => Utility::new(-score, source_metric),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn orientation(&self) -> Orientation {
        Orientation::HigherBetter
    }

    pub fn source_metric(&self) -> MetricTag {
        self.source_metric
    }

    /// Bitwise equality of the stored value.
    pub fn bit_eq(&self, other: &Utility) -> bool {
        self.value.to_bits() == other.value.to_bits()
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}
