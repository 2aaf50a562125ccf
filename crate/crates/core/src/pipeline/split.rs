//! Train/test split as a pure function of instance ids and a seed.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub ratio: f64,
    pub seed: u64,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl Split {
    pub fn is_train(&self, id: &str) -> bool {
        self.train.contains(id)
    }
}

/// Sorts the ids, shuffles them with the seed and takes the first
/// `round(ratio * n)` as training ids (at least one on each side when n ≥ 2).
pub fn split_ids<'a>(ids: impl IntoIterator<Item = &'a str>, ratio: f64, seed: u64) -> Split {
    let mut sorted: Vec<&str> = ids
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = sorted.len();
    let mut n_train = (ratio * n as f64).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    } else {
        n_train = n_train.min(n);
    }
    Split {
        ratio,
        seed,
        train: sorted[..n_train].iter().map(|s| s.to_string()).collect(),
        test: sorted[n_train..].iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_independent_and_sized() {
        let ids: Vec<String> = (0..30).map(|i| format!("i{i:02}")).collect();
        let a = split_ids(ids.iter().map(String::as_str), 0.6, 7);
        let b = split_ids(ids.iter().rev().map(String::as_str), 0.6, 7);
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 18);
        assert_eq!(a.test.len(), 12);
        assert!(a.train.is_disjoint(&a.test));
        assert_ne!(
            a.train,
            split_ids(ids.iter().map(String::as_str), 0.6, 8).train
        );
    }

    #[test]
    fn both_sides_nonempty() {
        let s = split_ids(["a", "b"], 0.99, 1);
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
    }
}
