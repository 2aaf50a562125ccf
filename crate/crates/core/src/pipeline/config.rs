//! Flat `key=value` pipeline configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{Mode, DEFAULT_EVAL_K};
use crate::ltr::TrainConfig;
use crate::topics::DEFAULT_TOP_K;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub kg_nodes: PathBuf,
    pub kg_edges: PathBuf,
    pub corpus: PathBuf,
    pub image_labels: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Mode of single-stage runs.
    pub mode: Mode,
    /// Modes run by `all`.
    pub modes: Vec<Mode>,
    pub top_k: usize,
    pub train1: TrainConfig,
    pub train2: TrainConfig,
    /// Grade of stage-1 candidates without a corpus grade.
    pub default_grade: u8,
    pub eval_k: usize,
    pub split_ratio: f64,
    pub split_seed: u64,
    /// Effective settings as written, for hashing.
    raw: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "kg.nodes",
    "kg.edges",
    "corpus.path",
    "corpus.image_labels",
    "out.dir",
    "mode",
    "modes",
    "top_k",
    "train1.restarts",
    "train1.seed",
    "train1.min_gain",
    "train1.step_base",
    "train1.step_levels",
    "train1.relevance_threshold",
    "train1.default_grade",
    "train2.restarts",
    "train2.seed",
    "train2.min_gain",
    "train2.step_base",
    "train2.step_levels",
    "eval.k",
    "split.ratio",
    "split.seed",
];

fn field_err(key: &str, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{key}`: {message}"))
}

fn parse_value<T: std::str::FromStr>(
    raw: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match raw.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| field_err(key, format!("{v:?}: {e}"))),
    }
}

fn train_config(
    raw: &BTreeMap<String, String>,
    prefix: &str,
    base: TrainConfig,
) -> Result<TrainConfig> {
    let key = |k: &str| format!("{prefix}.{k}");
    let config = TrainConfig {
        restarts: parse_value(raw, &key("restarts"), base.restarts)?,
        step_base: parse_value(raw, &key("step_base"), base.step_base)?,
        step_levels: parse_value(raw, &key("step_levels"), base.step_levels)?,
        min_gain: parse_value(raw, &key("min_gain"), base.min_gain)?,
        seed: parse_value(raw, &key("seed"), base.seed)?,
        relevance_threshold: parse_value(
            raw,
            &key("relevance_threshold"),
            base.relevance_threshold,
        )?,
    };
    if config.restarts == 0 {
        return Err(field_err(&key("restarts"), "must be at least 1"));
    }
    if !(config.step_base > 0.0 && config.step_base.is_finite()) {
        return Err(field_err(&key("step_base"), "must be positive"));
    }
    if config.step_levels == 0 {
        return Err(field_err(&key("step_levels"), "must be at least 1"));
    }
    if !(config.min_gain >= 0.0 && config.min_gain.is_finite()) {
        return Err(field_err(&key("min_gain"), "must be non-negative"));
    }
    Ok(config)
}

fn parse_modes(key: &str, value: &str) -> Result<Vec<Mode>> {
    let mut modes = Vec::new();
    for part in value.split(',').filter(|p| !p.trim().is_empty()) {
        let mode: Mode = part.parse().map_err(|e| field_err(key, e))?;
        if !modes.contains(&mode) {
            modes.push(mode);
        }
    }
    if modes.is_empty() {
        return Err(field_err(key, "no mode listed"));
    }
    Ok(modes)
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    i + 1
                )));
            }
            if raw.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: key `{key}` set twice",
                    i + 1
                )));
            }
        }
        Self::from_raw(raw, base_dir)
    }

    fn from_raw(raw: BTreeMap<String, String>, base_dir: &Path) -> Result<Self> {
        let path = |key: &str| -> Result<PathBuf> {
            let v = raw.get(key).ok_or_else(|| field_err(key, "is required"))?;
            if v.is_empty() {
                return Err(field_err(key, "is empty"));
            }
            Ok(base_dir.join(v))
        };
        let mode = match raw.get("mode") {
            Some(v) => v.parse().map_err(|e| field_err("mode", e))?,
            None => Mode::TII,
        };
        let modes = match raw.get("modes") {
            Some(v) => parse_modes("modes", v)?,
            None => Mode::ALL.to_vec(),
        };
        let train1 = train_config(&raw, "train1", TrainConfig::default())?;
        let train2 = train_config(
            &raw,
            "train2",
            TrainConfig {
                relevance_threshold: 1,
                ..TrainConfig::default()
            },
        )?;
        let default_grade: u8 = parse_value(&raw, "train1.default_grade", 1)?;
        if !(1..=5).contains(&default_grade) {
            return Err(field_err("train1.default_grade", "must be in 1..=5"));
        }
        if !(1..=5).contains(&train1.relevance_threshold) {
            return Err(field_err("train1.relevance_threshold", "must be in 1..=5"));
        }
        let top_k: usize = parse_value(&raw, "top_k", DEFAULT_TOP_K)?;
        if top_k == 0 {
            return Err(field_err("top_k", "must be at least 1"));
        }
        let eval_k: usize = parse_value(&raw, "eval.k", DEFAULT_EVAL_K)?;
        if eval_k == 0 {
            return Err(field_err("eval.k", "must be at least 1"));
        }
        let split_ratio: f64 = parse_value(&raw, "split.ratio", DEFAULT_SPLIT_RATIO)?;
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(field_err(
                "split.ratio",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(PipelineConfig {
            kg_nodes: path("kg.nodes")?,
            kg_edges: path("kg.edges")?,
            corpus: path("corpus.path")?,
            image_labels: raw.get("corpus.image_labels").map(|v| base_dir.join(v)),
            out_dir: base_dir.join(raw.get("out.dir").map_or("out", String::as_str)),
            mode,
            modes,
            top_k,
            train1,
            train2,
            default_grade,
            eval_k,
            split_ratio,
            split_seed: parse_value(&raw, "split.seed", 7)?,
            raw,
        })
    }

    /// Checks that every input file exists.
    pub fn validate(&self) -> Result<()> {
        let inputs = [
            ("kg.nodes", Some(&self.kg_nodes)),
            ("kg.edges", Some(&self.kg_edges)),
            ("corpus.path", Some(&self.corpus)),
            ("corpus.image_labels", self.image_labels.as_ref()),
        ];
        for (key, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(field_err(key, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self.modes = vec![mode];
        self.raw.insert("mode".into(), mode.to_string());
        self.raw.insert("modes".into(), mode.to_string());
        self
    }

    /// Replaces the stage-1, stage-2 and split seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train1.seed = seed;
        self.train2.seed = seed;
        self.split_seed = seed;
        for key in ["train1.seed", "train2.seed", "split.seed"] {
            self.raw.insert(key.into(), seed.to_string());
        }
        self
    }

    pub fn with_out_dir(mut self, dir: PathBuf) -> Self {
        self.out_dir = dir;
        self
    }

    pub fn with_image_labels(mut self, path: PathBuf) -> Self {
        self.raw
            .insert("corpus.image_labels".into(), path.display().to_string());
        self.image_labels = Some(path);
        self
    }

    /// SHA-256 over the effective settings, independent of where the config
    /// file lives and where outputs go.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.raw.iter().filter(|(k, _)| k.as_str() != "out.dir") {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn mode_dir(&self, mode: Mode) -> PathBuf {
        self.out_dir.join(mode.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "kg.nodes = kg/nodes.tsv\nkg.edges=kg/edges.tsv\ncorpus.path=corpus.jsonl\n";

    #[test]
    fn defaults_and_relative_paths() {
        let c = PipelineConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.kg_nodes, PathBuf::from("/data/kg/nodes.tsv"));
        assert_eq!(c.out_dir, PathBuf::from("/data/out"));
        assert_eq!(c.mode, Mode::TII);
        assert_eq!(c.modes, Mode::ALL.to_vec());
        assert_eq!(c.top_k, 10);
        assert_eq!(c.eval_k, 50);
        assert_eq!(c.split_ratio, 0.6);
        assert_eq!(c.train1.relevance_threshold, 4);
        assert_eq!(c.train2.relevance_threshold, 1);
    }

    #[test]
    fn field_level_errors() {
        for (extra, field) in [
            ("split.ratio=1.0", "split.ratio"),
            ("train1.restarts=abc", "train1.restarts"),
            ("mode=X", "mode"),
            ("top_k=0", "top_k"),
        ] {
            let err =
                PipelineConfig::parse(&format!("{MINIMAL}{extra}\n"), Path::new(".")).unwrap_err();
            assert!(
                matches!(&err, Error::Config(m) if m.contains(field)),
                "{err}"
            );
            assert_eq!(err.exit_code(), 1);
        }
        let err = PipelineConfig::parse("kg.nodes=a\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("kg.edges"));
        assert!(PipelineConfig::parse(&format!("{MINIMAL}bogus=1\n"), Path::new(".")).is_err());
    }

    #[test]
    fn missing_input_fails_validation() {
        let c = PipelineConfig::parse(MINIMAL, Path::new("/nonexistent")).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("kg.nodes"));
    }

    #[test]
    fn hash_tracks_overrides_not_location() {
        let a = PipelineConfig::parse(MINIMAL, Path::new("/a")).unwrap();
        let b = PipelineConfig::parse(MINIMAL, Path::new("/b")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().with_seed(3).hash());
        assert_eq!(a.hash().len(), 64);
    }
}
