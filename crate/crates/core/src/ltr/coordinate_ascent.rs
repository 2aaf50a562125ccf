use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{average_precision, compare_ranked, dot, RankModel, TrainConfig, TrainingExample};
use crate::error::{Error, Result};

/// Training MAP after initialization and after every accepted step, one list
/// per restart.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub restart_maps: Vec<Vec<f64>>,
}

struct Query {
    start: usize,
    relevant: Vec<bool>,
}

/// Queries with at least one relevant document, laid out contiguously with
/// documents in ascending id order so ties resolve by local position.
struct Dataset {
    dims: usize,
    rows: Vec<Vec<(usize, f64)>>,
    queries: Vec<Query>,
    /// Per dimension: affected queries with their `(local doc, value)` entries.
    columns: Vec<Vec<(usize, Vec<(usize, f64)>)>>,
}

impl Dataset {
    fn build<D: Ord + Clone + std::fmt::Debug>(
        examples: &[TrainingExample<D>],
        dims: usize,
        threshold: u8,
    ) -> Result<Self> {
        let mut grouped: BTreeMap<&str, Vec<&TrainingExample<D>>> = BTreeMap::new();
        for ex in examples {
            grouped.entry(ex.query_id.as_str()).or_default().push(ex);
        }

        let mut rows = Vec::new();
        let mut queries = Vec::new();
        let mut per_dim: Vec<BTreeMap<usize, Vec<(usize, f64)>>> = vec![BTreeMap::new(); dims];
        for (query_id, mut docs) in grouped {
            docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
                return Err(Error::Integrity(format!(
                    "document {:?} appears twice in query {query_id:?}",
                    w[0].doc_id
                )));
            }
            let mut parsed = Vec::with_capacity(docs.len());
            for doc in &docs {
                parsed.push(doc.features.entries(dims)?);
            }
            let relevant: Vec<bool> = docs.iter().map(|d| d.grade >= threshold).collect();
            if !relevant.contains(&true) {
                continue;
            }
            let q = queries.len();
            for (local, entries) in parsed.iter().enumerate() {
                for &(d, v) in entries {
                    per_dim[d].entry(q).or_default().push((local, v));
                }
            }
            queries.push(Query {
                start: rows.len(),
                relevant,
            });
            rows.extend(parsed);
        }
        if queries.is_empty() {
            return Err(Error::Training(
                "no query has a relevant document; nothing to optimize".into(),
            ));
        }
        let columns = per_dim
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        Ok(Dataset {
            dims,
            rows,
            queries,
            columns,
        })
    }

    fn query_len(&self, q: usize) -> usize {
        self.queries[q].relevant.len()
    }

    fn scores(&self, weights: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(weights, r)).collect()
    }

    fn query_ap(&self, q: usize, scores: &[f64]) -> f64 {
        let relevant = &self.queries[q].relevant;
        let mut order: Vec<usize> = (0..relevant.len()).collect();
        order.sort_by(|&a, &b| compare_ranked(scores[a], &a, scores[b], &b));
        let ranked: Vec<bool> = order.iter().map(|&i| relevant[i]).collect();
        average_precision(&ranked)
    }

    fn all_aps(&self, scores: &[f64]) -> Vec<f64> {
        (0..self.queries.len())
            .map(|q| {
                let start = self.queries[q].start;
                self.query_ap(q, &scores[start..start + self.query_len(q)])
            })
            .collect()
    }

    /// MAP after adding `step` to dimension `dim`, touching only the queries
    /// that have a nonzero value in that dimension.
    fn map_with_step(&self, scores: &[f64], aps: &[f64], dim: usize, step: f64) -> f64 {
        let mut aps = aps.to_vec();
        let mut local = Vec::new();
        for (q, entries) in &self.columns[dim] {
            let start = self.queries[*q].start;
            local.clear();
            local.extend_from_slice(&scores[start..start + self.query_len(*q)]);
            for &(i, v) in entries {
                local[i] += step * v;
            }
            aps[*q] = self.query_ap(*q, &local);
        }
        mean(&aps)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn l1_normalize(weights: &mut [f64]) -> bool {
    let norm: f64 = weights.iter().map(|w| w.abs()).sum();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for w in weights.iter_mut() {
        *w /= norm;
    }
    true
}

fn initial_weights(dims: usize, restart: usize, seed: u64) -> Vec<f64> {
    let uniform = vec![1.0 / dims as f64; dims];
    if restart == 0 {
        return uniform;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let mut weights: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
    if l1_normalize(&mut weights) {
        weights
    } else {
        uniform
    }
}

fn run_restart(data: &Dataset, config: &TrainConfig, restart: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let mut weights = initial_weights(data.dims, restart, config.seed);
    let mut scores = data.scores(&weights);
    let mut aps = data.all_aps(&scores);
    let mut map = mean(&aps);
    let mut trace = vec![map];

    loop {
        let mut accepted = false;
        for dim in 0..data.dims {
            if data.columns[dim].is_empty() {
                continue;
            }
            let others_zero = weights
                .iter()
                .enumerate()
                .all(|(d, &w)| d == dim || w == 0.0);
            let mut best: Option<(f64, f64)> = None;
            for level in 0..config.step_levels {
                let magnitude = config.step_base * 2f64.powi(level as i32);
                for step in [magnitude, -magnitude] {
                    if others_zero && weights[dim] + step == 0.0 {
                        continue;
                    }
                    let candidate = data.map_with_step(&scores, &aps, dim, step);
                    if best.is_none_or(|(_, b)| candidate > b) {
                        best = Some((step, candidate));
                    }
                }
            }
            let Some((step, candidate)) = best else {
                continue;
            };
            if candidate <= map + config.min_gain {
                continue;
            }
            let mut next = weights.clone();
            next[dim] += step;
            if !l1_normalize(&mut next) {
                continue;
            }
            // re-evaluate exactly as the final model will score
            let next_scores = data.scores(&next);
            let next_aps = data.all_aps(&next_scores);
            let next_map = mean(&next_aps);
            if next_map <= map + config.min_gain {
                continue;
            }
            assert!(
                next_map >= map,
                "training MAP decreased on an accepted step"
            );
            weights = next;
            scores = next_scores;
            aps = next_aps;
            map = next_map;
            trace.push(map);
            accepted = true;
        }
        if !accepted {
            break;
        }
    }
    (weights, map, trace)
}

/// Trains a unit-L1 linear model maximizing training MAP.
///
/// Restart 0 starts from uniform weights, the others from seeded random
/// weights. Each coordinate tries additive steps `±step_base·2^i`; the best
/// step is kept only if MAP rises by more than `min_gain`. A restart ends after
/// a full cycle without an accepted step; the best restart wins, earliest on
/// ties. Queries without relevant documents do not enter the MAP.
pub fn train_coordinate_ascent<D>(
    examples: &[TrainingExample<D>],
    feature_names: &[String],
    config: &TrainConfig,
) -> Result<RankModel>
where
    D: Ord + Clone + std::fmt::Debug + Sync,
{
    train_coordinate_ascent_traced(examples, feature_names, config).map(|(model, _)| model)
}

pub fn train_coordinate_ascent_traced<D>(
    examples: &[TrainingExample<D>],
    feature_names: &[String],
    config: &TrainConfig,
) -> Result<(RankModel, TrainTrace)>
where
    D: Ord + Clone + std::fmt::Debug + Sync,
{
    if feature_names.is_empty() {
        return Err(Error::Training("model has no feature dimensions".into()));
    }
    if config.restarts == 0 {
        return Err(Error::Training("at least one restart is required".into()));
    }
    let data = Dataset::build(examples, feature_names.len(), config.relevance_threshold)?;

    let runs: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(&data, config, r))
        .collect();

    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.1 > runs[best].1 {
            best = i;
        }
    }
    let trace = TrainTrace {
        restart_maps: runs.iter().map(|r| r.2.clone()).collect(),
    };
    let (weights, training_map, _) = runs.into_iter().nth(best).expect("at least one restart");
    Ok((
        RankModel {
            feature_names: feature_names.to_vec(),
            weights,
            training_map,
            config: *config,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltr::{rank, SampleVector};

    fn example(q: &str, doc: u32, features: Vec<f64>, grade: u8) -> TrainingExample<u32> {
        TrainingExample {
            query_id: q.into(),
            doc_id: doc,
            features: SampleVector::Dense(features),
            grade,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn separable_single_feature() {
        let data = vec![example("q", 1, vec![0.2], 1), example("q", 2, vec![0.9], 5)];
        let model = train_coordinate_ascent(&data, &names(1), &TrainConfig::default()).unwrap();
        assert_eq!(model.training_map, 1.0);
        assert_eq!(model.weights, vec![1.0]);
    }

    #[test]
    fn constant_features_keep_uniform_weights() {
        // all scores tie, so the ranking is by doc id: [1 (nonrel), 2 (rel), 3 (rel)]
        let data = vec![
            example("q", 1, vec![0.5, 0.5], 2),
            example("q", 2, vec![0.5, 0.5], 4),
            example("q", 3, vec![0.5, 0.5], 5),
        ];
        let model = train_coordinate_ascent(&data, &names(2), &TrainConfig::default()).unwrap();
        assert_eq!(model.weights, vec![0.5, 0.5]);
        let expected = (1.0 / 2.0 + 2.0 / 3.0) / 2.0;
        assert!((model.training_map - expected).abs() < 1e-12);
    }

    #[test]
    fn learns_negative_weight() {
        let data = vec![
            example("q", 1, vec![1.0, 0.0], 1),
            example("q", 2, vec![0.0, 0.0], 5),
            example("q", 3, vec![0.5, 0.0], 1),
        ];
        let model = train_coordinate_ascent(&data, &names(2), &TrainConfig::default()).unwrap();
        assert_eq!(model.training_map, 1.0);
        let r = rank(
            &model,
            "q",
            &[
                (1u32, SampleVector::Dense(vec![1.0, 0.0])),
                (2, SampleVector::Dense(vec![0.0, 0.0])),
            ],
        )
        .unwrap();
        assert_eq!(r.entries[0].doc_id, 2);
    }

    #[test]
    fn no_relevant_documents_is_training_error() {
        let data = vec![example("q", 1, vec![0.2], 1), example("q", 2, vec![0.9], 2)];
        let err = train_coordinate_ascent(&data, &names(1), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn dimension_mismatch_is_integrity_error() {
        let data = vec![example("q", 1, vec![0.2, 0.1], 5)];
        let err = train_coordinate_ascent(&data, &names(1), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn trace_is_non_decreasing() {
        let data: Vec<_> = (0..12u32)
            .map(|d| {
                let x = f64::from(d % 5) / 4.0;
                let y = f64::from((d * 7) % 11) / 10.0;
                example(
                    &format!("q{}", d % 3),
                    d,
                    vec![x, y, 1.0 - x],
                    if d % 4 == 0 { 5 } else { 1 },
                )
            })
            .collect();
        let (model, trace) =
            train_coordinate_ascent_traced(&data, &names(3), &TrainConfig::default()).unwrap();
        assert_eq!(trace.restart_maps.len(), 5);
        for maps in &trace.restart_maps {
            assert!(maps.windows(2).all(|w| w[1] > w[0]));
        }
        let l1: f64 = model.weights.iter().map(|w| w.abs()).sum();
        assert!((l1 - 1.0).abs() < 1e-12);
    }
}
