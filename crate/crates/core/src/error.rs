use thiserror::Error;

/// Errors from the pool-level primitives (enumeration and splitting).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("pool of {size} ids exceeds the enumeration limit of {limit}")]
    PoolTooLarge { size: usize, limit: usize },
    #[error("max_size {max_size} exceeds pool size {pool}")]
    BadMaxSize { max_size: usize, pool: usize },
    #[error("cannot split {pool} samples into {n_prime} candidates (need 1 <= n' < pool)")]
    BadSplit { n_prime: usize, pool: usize },
}
