use super::SelectError;
use crate::ids::{DemoSet, SampleId};

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn norm_is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// Sample-level retrieval: the `k` candidates whose features are most
/// cosine-similar to the query's, ties by candidate order. Makes no evaluator
/// calls.
pub fn select_nearest_neighbor(
    features: &[(SampleId, Vec<f64>)],
    query_feature: &[f64],
    k: usize,
) -> Result<DemoSet, SelectError> {
    if features.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    if k == 0 || k > features.len() {
        return Err(SelectError::BadK {
            k,
            pool: features.len(),
        });
    }
    let dim = query_feature.len();
    if norm_is_zero(query_feature) {
        return Err(SelectError::ZeroVector("query".into()));
    }
    let mut scored = Vec::with_capacity(features.len());
    for (i, (id, v)) in features.iter().enumerate() {
        if v.len() != dim {
            return Err(SelectError::DimensionMismatch {
                id: id.to_string(),
                expected: dim,
                found: v.len(),
            });
        }
        if norm_is_zero(v) {
            return Err(SelectError::ZeroVector(id.to_string()));
        }
        scored.push((i, cosine_similarity(v, query_feature)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(DemoSet::canonicalize(scored[..k].iter().map(|&(i, _)| features[i].0)))
}
