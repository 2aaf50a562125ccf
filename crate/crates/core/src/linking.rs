//! String-match linking of tag and image-label mentions to graph concepts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{normalize_title, KnowledgeGraph, NodeId};

/// One image-text instance of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub image_labels: Vec<String>,
    #[serde(default, rename = "topics")]
    pub topic_labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_grades: Option<BTreeMap<NodeId, u8>>,
}

impl Instance {
    pub fn new(id: &str) -> Self {
        Instance {
            id: id.to_string(),
            tags: Vec::new(),
            image_labels: Vec::new(),
            topic_labels: BTreeSet::new(),
            concept_grades: None,
        }
    }

    pub fn with_tags(mut self, tags: &[&str]) -> Self {
        self.tags = tags.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_image_labels(mut self, labels: &[&str]) -> Self {
        self.image_labels = labels.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_topics(mut self, topics: &[&str]) -> Self {
        self.topic_labels = topics.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn grade(&self, node: NodeId) -> Option<u8> {
        self.concept_grades.as_ref()?.get(&node).copied()
    }

    /// Mentions visible under `mode`, tags first.
    pub fn mentions(&self, mode: LinkMode) -> impl Iterator<Item = &str> {
        let images: &[String] = match mode {
            LinkMode::TagsOnly => &[],
            LinkMode::TagsAndImage => &self.image_labels,
        };
        self.tags.iter().chain(images).map(String::as_str)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty instance id".into());
        }
        if let Some(grades) = &self.concept_grades {
            if let Some((node, grade)) = grades.iter().find(|(_, g)| !(1..=5).contains(*g)) {
                return Err(format!("grade {grade} for concept {node} is outside 1..=5"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkMode {
    TagsOnly,
    TagsAndImage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub from_tags: bool,
    pub from_image: bool,
}

impl Origin {
    pub fn both(self) -> bool {
        self.from_tags && self.from_image
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub instance_id: String,
    pub seeds: BTreeMap<NodeId, Origin>,
}

impl SeedSet {
    pub fn empty(instance_id: &str) -> Self {
        SeedSet {
            instance_id: instance_id.to_string(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.seeds.keys().copied()
    }

    pub fn tag_seeds(&self) -> BTreeSet<NodeId> {
        self.seeds
            .iter()
            .filter(|(_, o)| o.from_tags)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn image_seeds(&self) -> BTreeSet<NodeId> {
        self.seeds
            .iter()
            .filter(|(_, o)| o.from_image)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn origin(&self, id: NodeId) -> Option<Origin> {
        self.seeds.get(&id).copied()
    }
}

/// Links every tag (and image label in [`LinkMode::TagsAndImage`]) as a whole
/// string; unmatched mentions are dropped.
pub fn link_instance(graph: &KnowledgeGraph, instance: &Instance, mode: LinkMode) -> SeedSet {
    let mut seeds: BTreeMap<NodeId, Origin> = BTreeMap::new();
    for tag in &instance.tags {
        if let Some(id) = graph.lookup_title(tag) {
            seeds.entry(id).or_default().from_tags = true;
        }
    }
    if mode == LinkMode::TagsAndImage {
        for label in &instance.image_labels {
            if let Some(id) = graph.lookup_title(label) {
                seeds.entry(id).or_default().from_image = true;
            }
        }
    }
    SeedSet {
        instance_id: instance.id.clone(),
        seeds,
    }
}

/// Corpus-level candidate/seed counts split by mention source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub total_candidates_tags: usize,
    pub total_seeds_tags: usize,
    pub total_candidates_image: usize,
    pub total_seeds_image: usize,
    pub unique_candidates_tags: usize,
    pub unique_seeds_tags: usize,
    pub unique_candidates_image: usize,
    pub unique_seeds_image: usize,
    pub empty_instances_tags: usize,
    pub empty_instances_image: usize,
}

#[derive(Default)]
struct SourceTally {
    candidates: usize,
    seeds: usize,
    unique_candidates: HashSet<String>,
    unique_seeds: HashSet<NodeId>,
    empty: usize,
}

impl SourceTally {
    fn add(&mut self, graph: &KnowledgeGraph, mentions: &[String]) {
        let mut seen_any = false;
        for mention in mentions {
            let norm = normalize_title(mention);
            if norm.is_empty() {
                continue;
            }
            seen_any = true;
            self.candidates += 1;
            if let Some(id) = graph.lookup_title(&norm) {
                self.seeds += 1;
                self.unique_seeds.insert(id);
            }
            self.unique_candidates.insert(norm);
        }
        if !seen_any {
            self.empty += 1;
        }
    }
}

/// Totals count every mention; unique columns count distinct normalized
/// mention strings (candidates) and distinct linked concepts (seeds).
pub fn corpus_link_stats(graph: &KnowledgeGraph, corpus: &[Instance]) -> LinkReport {
    let mut tags = SourceTally::default();
    let mut images = SourceTally::default();
    for instance in corpus {
        tags.add(graph, &instance.tags);
        images.add(graph, &instance.image_labels);
    }
    LinkReport {
        total_candidates_tags: tags.candidates,
        total_seeds_tags: tags.seeds,
        total_candidates_image: images.candidates,
        total_seeds_image: images.seeds,
        unique_candidates_tags: tags.unique_candidates.len(),
        unique_seeds_tags: tags.unique_seeds.len(),
        unique_candidates_image: images.unique_candidates.len(),
        unique_seeds_image: images.unique_seeds.len(),
        empty_instances_tags: tags.empty,
        empty_instances_image: images.empty,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

/// Parses a JSON-lines corpus. Unreadable records are skipped and reported;
/// a repeated instance id is an integrity error.
pub fn parse_corpus(text: &str) -> Result<(Vec<Instance>, Vec<SkippedRecord>)> {
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Instance>(line)
            .map_err(|e| e.to_string())
            .and_then(|inst| inst.validate().map(|_| inst));
        match parsed {
            Ok(instance) => {
                if !ids.insert(instance.id.clone()) {
                    return Err(Error::Integrity(format!(
                        "duplicate instance id {:?} on line {}",
                        instance.id,
                        i + 1
                    )));
                }
                instances.push(instance);
            }
            Err(reason) => skipped.push(SkippedRecord {
                line: i + 1,
                reason,
            }),
        }
    }
    Ok((instances, skipped))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Instance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (instances, skipped) = parse_corpus(&text)?;
    for record in &skipped {
        log::warn!(
            "{}:{}: skipping unreadable record: {}",
            path.display(),
            record.line,
            record.reason
        );
    }
    Ok(instances)
}

pub fn write_corpus(path: &Path, corpus: &[Instance]) -> Result<()> {
    let mut out = String::new();
    for instance in corpus {
        out.push_str(&serde_json::to_string(instance).map_err(|e| Error::json("corpus", e))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct LabelRecord {
    id: String,
    image_labels: Vec<String>,
}

/// Replaces image labels with those from a JSON-lines file of
/// `{"id": .., "image_labels": [..]}` records; instances not listed keep theirs.
pub fn apply_image_labels(corpus: &mut [Instance], path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LabelRecord>(line) {
            Ok(rec) => {
                labels.insert(rec.id, rec.image_labels);
            }
            Err(e) => log::warn!(
                "{}:{}: skipping unreadable label record: {e}",
                path.display(),
                i + 1
            ),
        }
    }
    for instance in corpus.iter_mut() {
        if let Some(l) = labels.remove(&instance.id) {
            instance.image_labels = l;
        }
    }
    for id in labels.keys() {
        log::warn!("image labels for unknown instance {id:?} ignored");
    }
    Ok(())
}
