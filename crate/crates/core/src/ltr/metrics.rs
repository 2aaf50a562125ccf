//! Binary-relevance ranking metrics.

use crate::error::{Error, Result};

/// Mean of the precision values at each relevant position. A list without
/// relevant items scores 0.
pub fn average_precision(ranked_relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &relevant) in ranked_relevance.iter().enumerate() {
        if relevant {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Fraction of relevant items among the first `k`; shorter lists count the
/// missing positions as non-relevant.
pub fn precision_at_k(ranked_relevance: &[bool], k: usize) -> f64 {
    assert!(k >= 1, "precision_at_k needs k >= 1");
    let hits = ranked_relevance.iter().take(k).filter(|&&r| r).count();
    hits as f64 / k as f64
}

pub fn mean_metric(per_query: &[f64]) -> Result<f64> {
    if per_query.is_empty() {
        return Err(Error::Integrity(
            "cannot average a metric over zero queries".into(),
        ));
    }
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64)
}
