//! Staged end-to-end pipeline: every stage reads the previous stages' files
//! from `<out>/<MODE>/` and writes its own.

pub mod config;
pub mod fixture;
pub mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;
pub use fixture::{gen_fixture, FixtureSpec};
pub use split::{split_ids, Split};

use crate::cluster::{build_relatedness_graph, louvain, Partition};
use crate::error::{Error, Result};
use crate::eval::{compare_modes, evaluate, EvalReport, Mode, ModeComparison};
use crate::features::{
    normalize_per_query, read_feature_dump, write_feature_dump, FeatureContext, FeatureRow,
    QueryFeatures, FEATURE_NAMES,
};
use crate::kg::{load_graph, KnowledgeGraph, NodeId};
use crate::linking::{
    apply_image_labels, corpus_link_stats, link_instance, read_corpus, Instance, SeedSet,
};
use crate::ltr::{self, RankModel, Ranking, SampleVector, TrainingExample};
use crate::query_graph::{build_query_graph, build_seed_graph, QueryGraph};
use crate::topics::{
    build_lexicon, load_topic_models, rank_images, save_topic_models, train_topic_models,
    vectorize, GoldLabels, InstanceVector, Lexicon,
};

pub const SEEDS_FILE: &str = "seeds.jsonl";
pub const LINK_REPORT_FILE: &str = "link_report.json";
pub const SPLIT_FILE: &str = "split.json";
pub const QUERY_GRAPHS_FILE: &str = "query_graphs.jsonl";
pub const PARTITIONS_FILE: &str = "partitions.jsonl";
pub const FEATURES_FILE: &str = "features.tsv";
pub const MODEL1_FILE: &str = "model1.json";
pub const RANKINGS1_FILE: &str = "rankings1.jsonl";
pub const LEXICON_FILE: &str = "lexicon.json";
pub const VECTORS_FILE: &str = "vectors.jsonl";
pub const TOPIC_MODELS_DIR: &str = "topic_models";
pub const RANKINGS2_FILE: &str = "rankings2.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const COMPARISON_TABLE_FILE: &str = "comparison.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Link,
    Graph,
    Cluster,
    Features,
    Train1,
    Rank1,
    Lexicon,
    Train2,
    Rank2,
    Evaluate,
    All,
}

impl Stage {
    pub const SEQUENCE: [Stage; 10] = [
        Stage::Link,
        Stage::Graph,
        Stage::Cluster,
        Stage::Features,
        Stage::Train1,
        Stage::Rank1,
        Stage::Lexicon,
        Stage::Train2,
        Stage::Rank2,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Link => "link",
            Stage::Graph => "graph",
            Stage::Cluster => "cluster",
            Stage::Features => "features",
            Stage::Train1 => "train1",
            Stage::Rank1 => "rank1",
            Stage::Lexicon => "lexicon",
            Stage::Train2 => "train2",
            Stage::Rank2 => "rank2",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::SEQUENCE
            .into_iter()
            .chain([Stage::All])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    pub config_hash: String,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub train1_seed: u64,
    pub train2_seed: u64,
    pub top_k: usize,
    pub eval_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PartitionRecord {
    instance_id: String,
    partition: Partition,
}

/// Runs one stage for `config.mode`, or every stage for every configured
/// mode when `stage` is [`Stage::All`], which also returns the comparison.
pub fn run_stage(config: &PipelineConfig, stage: Stage) -> Result<Option<ModeComparison>> {
    config.validate()?;
    if stage == Stage::All {
        return run_all(config).map(Some);
    }
    run_mode_stage(config, config.mode, stage).map(|_| None)
}

/// All stages for each configured mode, then the cross-mode comparison in
/// the output root.
pub fn run_all(config: &PipelineConfig) -> Result<ModeComparison> {
    config.validate()?;
    let mut reports = Vec::new();
    for &mode in &config.modes {
        for stage in Stage::SEQUENCE {
            run_mode_stage(config, mode, stage)?;
        }
        reports.push(read_json::<EvalReport>(
            &config.mode_dir(mode).join(REPORT_FILE),
            Stage::Evaluate,
        )?);
    }
    let comparison = compare_modes(&reports)?;
    write_json(&config.out_dir.join(COMPARISON_FILE), &comparison)?;
    write_text(
        &config.out_dir.join(COMPARISON_TABLE_FILE),
        &comparison.to_table(),
    )?;
    Ok(comparison)
}

pub fn run_mode_stage(config: &PipelineConfig, mode: Mode, stage: Stage) -> Result<()> {
    let dir = config.mode_dir(mode);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    log::info!("mode {mode}: stage {stage}");
    let run = StageRun { config, mode, dir };
    match stage {
        Stage::Link => run.link()?,
        Stage::Graph => run.graph()?,
        Stage::Cluster => run.cluster()?,
        Stage::Features => run.features()?,
        Stage::Train1 => run.train1()?,
        Stage::Rank1 => run.rank1()?,
        Stage::Lexicon => run.lexicon()?,
        Stage::Train2 => run.train2()?,
        Stage::Rank2 => run.rank2()?,
        Stage::Evaluate => run.evaluate()?,
        Stage::All => {
            for st in Stage::SEQUENCE {
                run_mode_stage(config, mode, st)?;
            }
            return Ok(());
        }
    }
    run.write_manifest()
}

struct StageRun<'a> {
    config: &'a PipelineConfig,
    mode: Mode,
    dir: PathBuf,
}

fn require(path: PathBuf, stage: Stage) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            artifact: path,
            stage: stage.as_str(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: DeserializeOwned>(path: &Path, producer: Stage) -> Result<T> {
    let path = require(path.to_path_buf(), producer)?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(
            &serde_json::to_string(r).map_err(|e| Error::json(path.display().to_string(), e))?,
        );
        out.push('\n');
    }
    write_text(path, &out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, producer: Stage) -> Result<Vec<T>> {
    let path = require(path.to_path_buf(), producer)?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads the corpus and applies the image-label override, if configured.
pub fn load_corpus(config: &PipelineConfig) -> Result<Vec<Instance>> {
    let mut corpus = read_corpus(&config.corpus)?;
    if let Some(path) = &config.image_labels {
        apply_image_labels(&mut corpus, path)?;
    }
    Ok(corpus)
}

pub fn gold_labels(corpus: &[Instance]) -> GoldLabels {
    corpus
        .iter()
        .map(|i| (i.id.clone(), i.topic_labels.clone()))
        .collect()
}

fn stage1_feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

impl StageRun<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn graph_kg(&self) -> Result<KnowledgeGraph> {
        load_graph(&self.config.kg_nodes, &self.config.kg_edges)
    }

    fn write_manifest(&self) -> Result<()> {
        let c = self.config;
        write_json(
            &self.path(MANIFEST_FILE),
            &Manifest {
                mode: self.mode,
                config_hash: c.hash(),
                split_ratio: c.split_ratio,
                split_seed: c.split_seed,
                train1_seed: c.train1.seed,
                train2_seed: c.train2.seed,
                top_k: c.top_k,
                eval_k: c.eval_k,
            },
        )
    }

    fn split(&self) -> Result<Split> {
        read_json(&self.path(SPLIT_FILE), Stage::Link)
    }

    fn query_graphs(&self) -> Result<Vec<QueryGraph>> {
        read_jsonl(&self.path(QUERY_GRAPHS_FILE), Stage::Graph)
    }

    fn lexicon_file(&self) -> Result<Lexicon> {
        read_json(&self.path(LEXICON_FILE), Stage::Lexicon)
    }

    fn vectors(&self) -> Result<Vec<InstanceVector>> {
        read_jsonl(&self.path(VECTORS_FILE), Stage::Lexicon)
    }

    fn link(&self) -> Result<()> {
        let graph = self.graph_kg()?;
        let corpus = load_corpus(self.config)?;
        let link_mode = self.mode.link_mode();
        let seeds: Vec<SeedSet> = corpus
            .par_iter()
            .map(|inst| link_instance(&graph, inst, link_mode))
            .collect();
        write_jsonl(&self.path(SEEDS_FILE), &seeds)?;
        write_json(
            &self.path(LINK_REPORT_FILE),
            &corpus_link_stats(&graph, &corpus),
        )?;
        let split = split_ids(
            corpus.iter().map(|i| i.id.as_str()),
            self.config.split_ratio,
            self.config.split_seed,
        );
        write_json(&self.path(SPLIT_FILE), &split)
    }

    fn graph(&self) -> Result<()> {
        let seeds: Vec<SeedSet> = read_jsonl(&self.path(SEEDS_FILE), Stage::Link)?;
        let graph = self.graph_kg()?;
        let with_intermediates = self.mode.with_intermediates();
        let graphs = seeds
            .par_iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                if with_intermediates {
                    build_query_graph(&graph, s)
                } else {
                    build_seed_graph(&graph, s)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        write_jsonl(&self.path(QUERY_GRAPHS_FILE), &graphs)
    }

    fn cluster(&self) -> Result<()> {
        let records: Vec<PartitionRecord> = self
            .query_graphs()?
            .par_iter()
            .map(|qg| PartitionRecord {
                instance_id: qg.instance_id().to_string(),
                partition: louvain(&build_relatedness_graph(qg)),
            })
            .collect();
        write_jsonl(&self.path(PARTITIONS_FILE), &records)
    }

    fn features(&self) -> Result<()> {
        let graphs = self.query_graphs()?;
        let partitions: BTreeMap<String, Partition> =
            read_jsonl::<PartitionRecord>(&self.path(PARTITIONS_FILE), Stage::Cluster)?
                .into_iter()
                .map(|r| (r.instance_id, r.partition))
                .collect();
        let graph = self.graph_kg()?;
        let corpus: BTreeMap<String, Instance> = load_corpus(self.config)?
            .into_iter()
            .map(|i| (i.id.clone(), i))
            .collect();
        let ctx = FeatureContext::new(&graph, self.mode.link_mode());
        let per_instance = graphs
            .par_iter()
            .map(|qg| {
                let id = qg.instance_id();
                let instance = corpus.get(id).ok_or_else(|| {
                    Error::Integrity(format!("query graph for unknown instance {id:?}"))
                })?;
                let partition = partitions.get(id).ok_or_else(|| Error::MissingArtifact {
                    artifact: self.path(PARTITIONS_FILE),
                    stage: Stage::Cluster.as_str(),
                })?;
                let raw = QueryFeatures::new(&ctx, qg, partition, instance).extract_all()?;
                let vectors: Vec<_> = raw.iter().map(|(_, v)| *v).collect();
                Ok(raw
                    .iter()
                    .zip(normalize_per_query(&vectors))
                    .map(|((node, _), values)| FeatureRow {
                        instance_id: id.to_string(),
                        node_id: *node,
                        values,
                        grade: instance.grade(*node),
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<FeatureRow> = per_instance.into_iter().flatten().collect();
        write_feature_dump(&self.path(FEATURES_FILE), &rows)
    }

    fn feature_rows(&self) -> Result<Vec<FeatureRow>> {
        read_feature_dump(&require(self.path(FEATURES_FILE), Stage::Features)?)
    }

    fn train1(&self) -> Result<()> {
        let rows = self.feature_rows()?;
        let split = self.split()?;
        let examples: Vec<TrainingExample<NodeId>> = rows
            .into_iter()
            .filter(|r| split.is_train(&r.instance_id))
            .map(|r| TrainingExample {
                query_id: r.instance_id,
                doc_id: r.node_id,
                features: SampleVector::Dense(r.values.0.to_vec()),
                grade: r.grade.unwrap_or(self.config.default_grade),
            })
            .collect();
        let model =
            ltr::train_coordinate_ascent(&examples, &stage1_feature_names(), &self.config.train1)?;
        log::info!("stage-1 training MAP {:.4}", model.training_map);
        model.save(&self.path(MODEL1_FILE))
    }

    fn rank1(&self) -> Result<()> {
        let model = RankModel::load(
            &require(self.path(MODEL1_FILE), Stage::Train1)?,
            &stage1_feature_names(),
        )?;
        let rows = self.feature_rows()?;
        let mut grouped: BTreeMap<String, Vec<(NodeId, SampleVector)>> = BTreeMap::new();
        for r in rows {
            grouped
                .entry(r.instance_id)
                .or_default()
                .push((r.node_id, SampleVector::Dense(r.values.0.to_vec())));
        }
        let rankings = grouped
            .par_iter()
            .map(|(id, candidates)| ltr::rank(&model, id, candidates))
            .collect::<Result<Vec<Ranking<NodeId>>>>()?;
        write_jsonl(&self.path(RANKINGS1_FILE), &rankings)
    }

    fn lexicon(&self) -> Result<()> {
        let rankings: Vec<Ranking<NodeId>> = read_jsonl(&self.path(RANKINGS1_FILE), Stage::Rank1)?;
        let split = self.split()?;
        let lexicon = build_lexicon(
            rankings.iter().filter(|r| split.is_train(&r.query_id)),
            self.config.top_k,
        );
        log::info!("lexicon size {}", lexicon.len());
        let by_id: BTreeMap<&str, &Ranking<NodeId>> =
            rankings.iter().map(|r| (r.query_id.as_str(), r)).collect();
        let vectors: Vec<InstanceVector> = load_corpus(self.config)?
            .iter()
            .map(|inst| match by_id.get(inst.id.as_str()) {
                Some(r) => vectorize(r, &lexicon),
                None => InstanceVector::empty(&inst.id),
            })
            .collect();
        write_json(&self.path(LEXICON_FILE), &lexicon)?;
        write_jsonl(&self.path(VECTORS_FILE), &vectors)
    }

    fn train2(&self) -> Result<()> {
        let lexicon = self.lexicon_file()?;
        let vectors = self.vectors()?;
        let split = self.split()?;
        let corpus = load_corpus(self.config)?;
        let gold = gold_labels(&corpus);
        let topics: Vec<String> = corpus
            .iter()
            .flat_map(|i| i.topic_labels.iter().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let train: Vec<InstanceVector> = vectors
            .into_iter()
            .filter(|v| split.is_train(&v.instance_id))
            .collect();
        let models = train_topic_models(&train, &gold, &topics, &lexicon, &self.config.train2)?;
        let dir = self.path(TOPIC_MODELS_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        save_topic_models(&dir, &models)
    }

    fn rank2(&self) -> Result<()> {
        let lexicon = self.lexicon_file()?;
        let dir = require(self.path(TOPIC_MODELS_DIR), Stage::Train2)?;
        let models = load_topic_models(&dir, &lexicon)?;
        let split = self.split()?;
        let test: Vec<InstanceVector> = self
            .vectors()?
            .into_iter()
            .filter(|v| !split.is_train(&v.instance_id))
            .collect();
        write_json(&self.path(RANKINGS2_FILE), &rank_images(&models, &test)?)
    }

    fn evaluate(&self) -> Result<()> {
        let rankings: BTreeMap<String, Ranking<String>> =
            read_json(&self.path(RANKINGS2_FILE), Stage::Rank2)?;
        let lexicon = self.lexicon_file()?;
        let gold = gold_labels(&load_corpus(self.config)?);
        let report = evaluate(&rankings, &gold, self.config.eval_k, self.mode)?
            .with_lexicon_size(lexicon.len());
        log::info!("mode {}: MAP {:.4}", self.mode, report.overall_map);
        write_json(&self.path(REPORT_FILE), &report)?;
        write_text(&self.path(REPORT_TABLE_FILE), &report.to_table())
    }
}

/// Reads a mode's evaluation report written by the `evaluate` stage.
pub fn read_report(config: &PipelineConfig, mode: Mode) -> Result<EvalReport> {
    read_json(&config.mode_dir(mode).join(REPORT_FILE), Stage::Evaluate)
}

/// Reads a mode's lexicon and instance vectors written by the `lexicon` stage.
pub fn read_vectors(config: &PipelineConfig, mode: Mode) -> Result<(Lexicon, Vec<InstanceVector>)> {
    let dir = config.mode_dir(mode);
    Ok((
        read_json(&dir.join(LEXICON_FILE), Stage::Lexicon)?,
        read_jsonl(&dir.join(VECTORS_FILE), Stage::Lexicon)?,
    ))
}
