//! Sample identifiers and the canonical unordered demonstration set.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Identifier of one sample in a pool. Unique within the pool.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl SampleId {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl From<u64> for SampleId {
    fn from(v: u64) -> Self {
        SampleId(v)
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convenience for building id lists in tests and configs.
pub fn ids<I: IntoIterator<Item = u64>>(raw: I) -> Vec<SampleId> {
    raw.into_iter().map(SampleId).collect()
}

/// One labeled demonstration candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    /// Mask or image file holding the label.
    pub label_ref: Option<PathBuf>,
    /// Row index into the pool's feature file.
    pub feature_ref: Option<usize>,
}

impl Sample {
    pub fn bare(id: SampleId) -> Self {
        Sample {
            id,
            label_ref: None,
            feature_ref: None,
        }
    }
}

/// Unordered set of demonstrations, stored sorted and deduplicated.
///
/// Two sets built from any permutation of the same ids compare equal. The
/// empty set is a legal value (the starting point of greedy search) but no
/// evaluator accepts it.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct DemoSet(Vec<SampleId>);

impl DemoSet {
    pub fn empty() -> Self {
        DemoSet(Vec::new())
    }

    pub fn canonicalize<I: IntoIterator<Item = SampleId>>(ids: I) -> Self {
        let mut members: Vec<SampleId> = ids.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        DemoSet(members)
    }

    pub fn singleton(id: SampleId) -> Self {
        DemoSet(vec![id])
    }

    /// Wraps a list the caller already knows to be strictly ascending.
    pub(crate) fn from_sorted_unchecked(members: Vec<SampleId>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        DemoSet(members)
    }

    pub fn members(&self) -> &[SampleId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    /// Returns a new set with `id` added.
    pub fn with(&self, id: SampleId) -> Self {
        match self.0.binary_search(&id) {
            Ok(_) => self.clone(),
            Err(pos) => {
                let mut members = Vec::with_capacity(self.0.len() + 1);
                members.extend_from_slice(&self.0[..pos]);
                members.push(id);
                members.extend_from_slice(&self.0[pos..]);
                DemoSet(members)
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.0.iter().copied()
    }

    pub fn raw(&self) -> Vec<u64> {
        self.0.iter().map(|id| id.0).collect()
    }
}

impl<'de> Deserialize<'de> for DemoSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<SampleId>::deserialize(d)?;
        Ok(DemoSet::canonicalize(ids))
    }
}

impl FromIterator<SampleId> for DemoSet {
    fn from_iter<T: IntoIterator<Item = SampleId>>(iter: T) -> Self {
        DemoSet::canonicalize(iter)
    }
}

impl fmt::Display for DemoSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(raw: &[u64]) -> DemoSet {
        DemoSet::canonicalize(ids(raw.iter().copied()))
    }

    #[test]
    fn canonicalize_sorts() {
        assert_eq!(set(&[3, 1, 2]).raw(), vec![1, 2, 3]);
    }

    #[test]
    fn canonicalize_dedups() {
        assert_eq!(set(&[5, 5]).raw(), vec![5]);
    }

    #[test]
    fn empty_is_a_value() {
        let s = set(&[]);
        assert!(s.is_empty());
        assert_eq!(s, DemoSet::empty());
    }

    #[test]
    fn with_inserts_in_order() {
        let s = set(&[1, 5]).with(SampleId(3));
        assert_eq!(s.raw(), vec![1, 3, 5]);
        assert_eq!(s.with(SampleId(3)), s);
    }

    #[test]
    fn display_and_serde() {
        let s = set(&[2, 1]);
        assert_eq!(s.to_string(), "{1,2}");
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,2]");
        let back: DemoSet = serde_json::from_str("[2,1,2]").unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut raw in proptest::collection::vec(0u64..40, 0..12), seed in any::<u64>()) {
            let a = set(&raw);
            // deterministic shuffle driven by the proptest seed
            let n = raw.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                raw.swap(i, j);
            }
            prop_assert_eq!(set(&raw), a.clone());
            prop_assert!(a.members().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
