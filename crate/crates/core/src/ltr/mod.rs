//! Listwise learning to rank with a linear scoring function.
//!
//! Models are trained by coordinate ascent directly on mean average
//! precision; scoring is a dot product and rankings break ties by ascending
//! document id.

mod coordinate_ascent;
pub mod metrics;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use coordinate_ascent::{train_coordinate_ascent, train_coordinate_ascent_traced, TrainTrace};
pub use metrics::{average_precision, mean_metric, precision_at_k};

use crate::error::{Error, Result};

/// Feature values of one document: dense for concept features, sparse for
/// lexicon vectors. Absent sparse dimensions are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleVector {
    Dense(Vec<f64>),
    Sparse(BTreeMap<usize, f64>),
}

impl SampleVector {
    /// Nonzero `(dimension, value)` pairs in ascending dimension order, after
    /// checking that every dimension is below `dims`.
    pub fn entries(&self, dims: usize) -> Result<Vec<(usize, f64)>> {
        match self {
            SampleVector::Dense(values) => {
                if values.len() != dims {
                    return Err(Error::Integrity(format!(
                        "vector has {} dimensions, model expects {dims}",
                        values.len()
                    )));
                }
                Ok(values
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, &v)| (i, v))
                    .collect())
            }
            SampleVector::Sparse(map) => {
                if let Some((&d, _)) = map.range(dims..).next() {
                    return Err(Error::Integrity(format!(
                        "sparse dimension {d} is out of range for {dims} dimensions"
                    )));
                }
                Ok(map
                    .iter()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(&i, &v)| (i, v))
                    .collect())
            }
        }
    }
}

pub(crate) fn dot(weights: &[f64], entries: &[(usize, f64)]) -> f64 {
    entries
        .iter()
        .fold(0.0, |acc, &(d, v)| acc + weights[d] * v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<D> {
    pub query_id: String,
    pub doc_id: D,
    pub features: SampleVector,
    pub grade: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc<D> {
    pub doc_id: D,
    pub score: f64,
}

/// Documents of one query ordered by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking<D> {
    pub query_id: String,
    pub entries: Vec<RankedDoc<D>>,
}

impl<D: Ord + Clone> Ranking<D> {
    /// Sorts `(doc, score)` pairs into a ranking. Duplicate ids are an
    /// integrity error.
    pub fn from_scores(query_id: &str, scored: Vec<(D, f64)>) -> Result<Self>
    where
        D: std::fmt::Debug,
    {
        let mut entries: Vec<RankedDoc<D>> = scored
            .into_iter()
            .map(|(doc_id, score)| RankedDoc { doc_id, score })
            .collect();
        entries.sort_by(|a, b| compare_ranked(a.score, &a.doc_id, b.score, &b.doc_id));
        if let Some(pair) = entries.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(Error::Integrity(format!(
                "document {:?} appears twice in query {query_id:?}",
                pair[0].doc_id
            )));
        }
        Ok(Ranking {
            query_id: query_id.to_string(),
            entries,
        })
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &D> {
        self.entries.iter().map(|e| &e.doc_id)
    }

    pub fn top(&self, k: usize) -> impl Iterator<Item = &D> {
        self.doc_ids().take(k)
    }

    pub fn relevance(&self, is_relevant: impl Fn(&D) -> bool) -> Vec<bool> {
        self.doc_ids().map(is_relevant).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn compare_ranked<D: Ord>(sa: f64, a: &D, sb: f64, b: &D) -> Ordering {
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub restarts: usize,
    pub step_base: f64,
    pub step_levels: u32,
    pub min_gain: f64,
    pub seed: u64,
    /// Grades at or above this count as relevant for MAP.
    pub relevance_threshold: u8,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            restarts: 5,
            step_base: 0.05,
            step_levels: 10,
            min_gain: 1e-6,
            seed: 7,
            relevance_threshold: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub training_map: f64,
    pub config: TrainConfig,
}

impl RankModel {
    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &SampleVector) -> Result<f64> {
        Ok(dot(&self.weights, &features.entries(self.dims())?))
    }

    pub fn check_feature_names<S: AsRef<str>>(&self, expected: &[S]) -> Result<()> {
        let matches = self.feature_names.len() == expected.len()
            && self
                .feature_names
                .iter()
                .zip(expected)
                .all(|(a, b)| a == b.as_ref());
        if matches {
            Ok(())
        } else {
            Err(Error::Integrity(
                "model feature names do not match the expected feature list".into(),
            ))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("rank model", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a model and verifies its recorded feature names.
    pub fn load<S: AsRef<str>>(path: &Path, expected_names: &[S]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: RankModel =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if model.weights.len() != model.feature_names.len() {
            return Err(Error::Integrity(format!(
                "{}: {} weights for {} feature names",
                path.display(),
                model.weights.len(),
                model.feature_names.len()
            )));
        }
        model.check_feature_names(expected_names)?;
        Ok(model)
    }
}

/// Scores candidates with `model` and sorts them into a ranking.
pub fn rank<D>(
    model: &RankModel,
    query_id: &str,
    candidates: &[(D, SampleVector)],
) -> Result<Ranking<D>>
where
    D: Ord + Clone + std::fmt::Debug,
{
    let scored = candidates
        .iter()
        .map(|(id, v)| model.score(v).map(|s| (id.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    Ranking::from_scores(query_id, scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: &[f64]) -> RankModel {
        RankModel {
            feature_names: (0..weights.len()).map(|i| format!("f{i}")).collect(),
            weights: weights.to_vec(),
            training_map: 0.0,
            config: TrainConfig::default(),
        }
    }

    #[test]
    fn ranks_by_score() {
        let m = model(&[1.0, 0.0]);
        let r = rank(
            &m,
            "q",
            &[
                ("b", SampleVector::Dense(vec![0.1, 0.0])),
                ("a", SampleVector::Dense(vec![0.9, 0.0])),
            ],
        )
        .unwrap();
        assert_eq!(r.doc_ids().copied().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let m = model(&[0.5, 0.5]);
        let docs: Vec<(u32, SampleVector)> = [30, 4, 17]
            .iter()
            .map(|&id| (id, SampleVector::Dense(vec![1.0, 1.0])))
            .collect();
        let r = rank(&m, "q", &docs).unwrap();
        assert_eq!(r.doc_ids().copied().collect::<Vec<_>>(), vec![4, 17, 30]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = model(&[1.0, 0.0]);
        let err = rank(&m, "q", &[(1, SampleVector::Dense(vec![1.0]))]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        let sparse = SampleVector::Sparse(BTreeMap::from([(2, 1.0)]));
        assert!(matches!(
            rank(&m, "q", &[(1, sparse)]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn duplicate_docs_rejected() {
        let err = Ranking::from_scores("q", vec![(1, 0.3), (1, 0.2)]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn model_file_checks_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model(&[0.25, 0.75]);
        m.save(&path).unwrap();
        assert_eq!(RankModel::load(&path, &["f0", "f1"]).unwrap(), m);
        assert!(matches!(
            RankModel::load(&path, &["f1", "f0"]),
            Err(Error::Integrity(_))
        ));
    }
}
