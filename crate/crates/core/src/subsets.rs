//! Deterministic enumeration of non-empty subsets.

use crate::error::CoreError;
use crate::ids::{DemoSet, SampleId};

/// Largest pool accepted by exhaustive enumeration.
pub const MAX_ENUMERATION_POOL: usize = 24;

/// Iterator over every non-empty subset of a pool, by ascending size and then
/// lexicographically by the sorted member list.
#[derive(Debug, Clone)]
pub struct Subsets {
    pool: Vec<SampleId>,
    max_size: usize,
    // index combination for the current size; empty before the first item
    cursor: Vec<usize>,
    done: bool,
}

impl Subsets {
    fn advance(&mut self) -> bool {
        let n = self.pool.len();
        let k = self.cursor.len();
        // rightmost position that can still move
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.cursor[i] < n - k + i {
                self.cursor[i] += 1;
                for j in i + 1..k {
                    self.cursor[j] = self.cursor[j - 1] + 1;
                }
                return true;
            }
        }
        if k < self.max_size {
            self.cursor = (0..=k).collect();
            return true;
        }
        false
    }
}

impl Iterator for Subsets {
    type Item = DemoSet;

    fn next(&mut self) -> Option<DemoSet> {
        if self.done {
            return None;
        }
        if !self.advance() {
            self.done = true;
            return None;
        }
        Some(DemoSet::from_sorted_unchecked(
            self.cursor.iter().map(|&i| self.pool[i]).collect(),
        ))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = subset_count(self.pool.len(), self.max_size);
        (0, Some(n as usize))
    }
}

/// Number of non-empty subsets of an `n`-pool with at most `max_size` members.
pub fn subset_count(n: usize, max_size: usize) -> u64 {
    (1..=max_size.min(n)).map(|k| binomial(n as u64, k as u64)).sum()
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Enumerates every non-empty subset of `ids` with at most `max_size` members
/// (default: all sizes). Duplicate ids are collapsed first.
pub fn enumerate_subsets(
    ids: &[SampleId],
    max_size: Option<usize>,
) -> Result<Subsets, CoreError> {
    let pool = DemoSet::canonicalize(ids.iter().copied()).members().to_vec();
    if pool.len() > MAX_ENUMERATION_POOL {
        return Err(CoreError::PoolTooLarge {
            size: pool.len(),
            limit: MAX_ENUMERATION_POOL,
        });
    }
    let max_size = match max_size {
        Some(m) if m > pool.len() => {
            return Err(CoreError::BadMaxSize {
                max_size: m,
                pool: pool.len(),
            })
        }
        Some(m) => m,
        None => pool.len(),
    };
    Ok(Subsets {
        pool,
        max_size,
        cursor: Vec::new(),
        done: false,
    })
}
