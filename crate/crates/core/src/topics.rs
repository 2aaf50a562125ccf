//! Second ranking stage: concept lexicon, instance vectors built from
//! first-stage scores, and one ranking model per class topic.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::NodeId;
use crate::ltr::{self, RankModel, Ranking, SampleVector, TrainConfig, TrainingExample};

pub const DEFAULT_TOP_K: usize = 10;

/// Concept → dimension map, dimensions assigned in ascending node-id order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub top_k: usize,
    pub entries: BTreeMap<NodeId, usize>,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self, concept: NodeId) -> Option<usize> {
        self.entries.get(&concept).copied()
    }

    /// Dimension names recorded in stage-2 model files.
    pub fn feature_names(&self) -> Vec<String> {
        self.entries
            .keys()
            .map(|id| format!("concept:{id}"))
            .collect()
    }
}

/// Union of every ranking's first `top_k` concepts.
pub fn build_lexicon<'a>(
    stage1_rankings: impl IntoIterator<Item = &'a Ranking<NodeId>>,
    top_k: usize,
) -> Lexicon {
    assert!(top_k >= 1, "top_k must be at least 1");
    let concepts: BTreeSet<NodeId> = stage1_rankings
        .into_iter()
        .flat_map(|r| r.top(top_k).copied())
        .collect();
    Lexicon {
        top_k,
        entries: concepts
            .into_iter()
            .enumerate()
            .map(|(d, id)| (id, d))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceVector {
    pub instance_id: String,
    pub entries: BTreeMap<usize, f64>,
}

impl InstanceVector {
    pub fn empty(instance_id: &str) -> Self {
        InstanceVector {
            instance_id: instance_id.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn sample(&self) -> SampleVector {
        SampleVector::Sparse(self.entries.clone())
    }
}

/// Places each ranked concept's first-stage score at its lexicon dimension;
/// concepts outside the lexicon are dropped.
pub fn vectorize(ranking: &Ranking<NodeId>, lexicon: &Lexicon) -> InstanceVector {
    let entries = ranking
        .entries
        .iter()
        .filter_map(|e| lexicon.dim(e.doc_id).map(|d| (d, e.score)))
        .collect();
    InstanceVector {
        instance_id: ranking.query_id.clone(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub topic: String,
    pub model: RankModel,
}

/// Gold topic labels per instance id.
pub type GoldLabels = BTreeMap<String, BTreeSet<String>>;

fn topic_examples(
    vectors: &[InstanceVector],
    gold: &GoldLabels,
    topic: &str,
) -> Result<Vec<TrainingExample<String>>> {
    vectors
        .iter()
        .map(|v| {
            let labels = gold.get(&v.instance_id).ok_or_else(|| {
                Error::Integrity(format!("instance {:?} has no gold entry", v.instance_id))
            })?;
            Ok(TrainingExample {
                query_id: topic.to_string(),
                doc_id: v.instance_id.clone(),
                features: v.sample(),
                grade: u8::from(labels.contains(topic)),
            })
        })
        .collect()
}

/// Trains one model per topic: the topic is the query, every training
/// instance a document, graded 1 when it carries the topic and 0 otherwise.
pub fn train_topic_models(
    vectors: &[InstanceVector],
    gold: &GoldLabels,
    topics: &[String],
    lexicon: &Lexicon,
    config: &TrainConfig,
) -> Result<Vec<TopicModel>> {
    if lexicon.is_empty() {
        return Err(Error::Training(
            "the lexicon is empty; no stage-2 dimensions".into(),
        ));
    }
    let names = lexicon.feature_names();
    let config = TrainConfig {
        relevance_threshold: 1,
        ..*config
    };
    topics
        .par_iter()
        .map(|topic| {
            let examples = topic_examples(vectors, gold, topic)?;
            let positives = examples.iter().filter(|e| e.grade == 1).count();
            if positives == 0 {
                return Err(Error::Training(format!(
                    "topic {topic:?} has no positive training instance"
                )));
            }
            if positives == examples.len() {
                return Err(Error::Training(format!(
                    "topic {topic:?} has no negative training instance"
                )));
            }
            let model = ltr::train_coordinate_ascent(&examples, &names, &config)?;
            Ok(TopicModel {
                topic: topic.clone(),
                model,
            })
        })
        .collect()
}

/// Unit-L1 random weights in `[-1, 1]` per topic, for chance-level baselines.
pub fn random_topic_models(lexicon: &Lexicon, topics: &[String], seed: u64) -> Vec<TopicModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    topics
        .iter()
        .map(|topic| {
            let mut weights: Vec<f64> = (0..lexicon.len())
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect();
            let norm: f64 = weights.iter().map(|w| w.abs()).sum();
            if norm > 0.0 {
                weights.iter_mut().for_each(|w| *w /= norm);
            }
            TopicModel {
                topic: topic.clone(),
                model: RankModel {
                    feature_names: lexicon.feature_names(),
                    weights,
                    training_map: 0.0,
                    config: TrainConfig {
                        restarts: 0,
                        seed,
                        ..TrainConfig::default()
                    },
                },
            }
        })
        .collect()
}

/// Ranks every instance for every topic (ties by ascending instance id).
pub fn rank_images(
    models: &[TopicModel],
    vectors: &[InstanceVector],
) -> Result<BTreeMap<String, Ranking<String>>> {
    let candidates: Vec<(String, SampleVector)> = vectors
        .iter()
        .map(|v| (v.instance_id.clone(), v.sample()))
        .collect();
    models
        .par_iter()
        .map(|tm| ltr::rank(&tm.model, &tm.topic, &candidates).map(|r| (tm.topic.clone(), r)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TopicIndexEntry {
    topic: String,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopicIndex {
    topics: Vec<TopicIndexEntry>,
}

fn file_stem(topic: &str) -> String {
    topic
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one model file per topic plus `index.json` into `dir`.
pub fn save_topic_models(dir: &Path, models: &[TopicModel]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = TopicIndex { topics: Vec::new() };
    for (i, tm) in models.iter().enumerate() {
        let file = format!("{i:03}_{}.json", file_stem(&tm.topic));
        tm.model.save(&dir.join(&file))?;
        index.topics.push(TopicIndexEntry {
            topic: tm.topic.clone(),
            file,
        });
    }
    let path = dir.join("index.json");
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::json("topic index", e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_topic_models(dir: &Path, lexicon: &Lexicon) -> Result<Vec<TopicModel>> {
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: TopicIndex =
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    let names = lexicon.feature_names();
    index
        .topics
        .into_iter()
        .map(|entry| {
            let model = RankModel::load(&dir.join(&entry.file), &names)?;
            Ok(TopicModel {
                topic: entry.topic,
                model,
            })
        })
        .collect()
}
