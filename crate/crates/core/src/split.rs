//! Seeded partition of a pool into search candidates and held-out validation
//! samples.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::ids::SampleId;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub pool_ids: Vec<SampleId>,
    /// Candidates in pool order.
    pub candidate_ids: Vec<SampleId>,
    /// Remaining pool members in pool order.
    pub heldout_ids: Vec<SampleId>,
    pub seed: u64,
}

/// Draws `n_prime` candidates uniformly from `pool`; the rest are held out.
///
/// Both halves keep the pool's ordering, so candidate order (and therefore
/// tie-breaking downstream) is a function of `(pool, n_prime, seed)` only.
pub fn make_split(pool: &[SampleId], n_prime: usize, seed: u64) -> Result<SplitSpec, CoreError> {
    if n_prime == 0 || n_prime >= pool.len() {
        return Err(CoreError::BadSplit {
            n_prime,
            pool: pool.len(),
        });
    }
    let mut positions: Vec<usize> = (0..pool.len()).collect();
    SeededRng::new(seed).partial_shuffle(&mut positions, n_prime);
    let mut picked = vec![false; pool.len()];
    for &p in &positions[..n_prime] {
        picked[p] = true;
    }
    let (candidates, heldout): (Vec<_>, Vec<_>) =
        pool.iter().zip(&picked).partition(|(_, &is_candidate)| is_candidate);
    Ok(SplitSpec {
        pool_ids: pool.to_vec(),
        candidate_ids: candidates.into_iter().map(|(id, _)| *id).collect(),
        heldout_ids: heldout.into_iter().map(|(id, _)| *id).collect(),
        seed,
    })
}
