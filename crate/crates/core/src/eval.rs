//! Per-topic and overall MAP / P@k, and the comparison of candidate-set modes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linking::LinkMode;
use crate::ltr::{average_precision, mean_metric, precision_at_k, Ranking};
use crate::topics::GoldLabels;

pub const DEFAULT_EVAL_K: usize = 50;

/// Which concepts enter the gist ranking: tag seeds only, tag and image
/// seeds, or seeds plus intermediate categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    T,
    TI,
    TII,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::T, Mode::TI, Mode::TII];

    pub fn link_mode(self) -> LinkMode {
        match self {
            Mode::T => LinkMode::TagsOnly,
            Mode::TI | Mode::TII => LinkMode::TagsAndImage,
        }
    }

    pub fn with_intermediates(self) -> bool {
        self == Mode::TII
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::T => "T",
            Mode::TI => "TI",
            Mode::TII => "TII",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::T => "Gist(S_t)",
            Mode::TI => "Gist(S_t,i)",
            Mode::TII => "Gist(S_t,i,I)",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T" => Ok(Mode::T),
            "TI" => Ok(Mode::TI),
            "TII" => Ok(Mode::TII),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected T, TI or TII)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicScores {
    pub ap: f64,
    pub p_at_k: f64,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub k: usize,
    pub per_topic: BTreeMap<String, TopicScores>,
    pub overall_map: f64,
    pub overall_p_at_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_size: Option<usize>,
}

/// Scores each topic's ranking against the gold labels; overall values are
/// unweighted means over topics.
pub fn evaluate(
    rankings: &BTreeMap<String, Ranking<String>>,
    gold: &GoldLabels,
    k: usize,
    mode: Mode,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::Config(
            "evaluation cutoff k must be at least 1".into(),
        ));
    }
    let mut per_topic = BTreeMap::new();
    for (topic, ranking) in rankings {
        let mut relevance = Vec::with_capacity(ranking.len());
        for id in ranking.doc_ids() {
            let labels = gold.get(id).ok_or_else(|| {
                Error::Integrity(format!("ranked instance {id:?} has no gold entry"))
            })?;
            relevance.push(labels.contains(topic));
        }
        let positives = relevance.iter().filter(|&&r| r).count();
        if positives == 0 {
            log::warn!("topic {topic:?} has no gold positives among ranked instances");
        }
        per_topic.insert(
            topic.clone(),
            TopicScores {
                ap: average_precision(&relevance),
                p_at_k: precision_at_k(&relevance, k),
                positives,
            },
        );
    }
    let aps: Vec<f64> = per_topic.values().map(|s| s.ap).collect();
    let precisions: Vec<f64> = per_topic.values().map(|s| s.p_at_k).collect();
    Ok(EvalReport {
        mode,
        k,
        overall_map: mean_metric(&aps)?,
        overall_p_at_k: mean_metric(&precisions)?,
        per_topic,
        lexicon_size: None,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

impl EvalReport {
    pub fn with_lexicon_size(mut self, size: usize) -> Self {
        self.lexicon_size = Some(size);
        self
    }

    /// Plain-text table: overall metrics, then one row per topic.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .per_topic
            .keys()
            .map(|t| t.chars().count())
            .chain([self.mode.label().len(), 8])
            .max()
            .unwrap_or(8);
        writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>9}",
            self.mode.label(),
            "AP",
            format!("P@{}", self.k),
            "positives"
        )
        .unwrap();
        for (topic, s) in &self.per_topic {
            writeln!(
                out,
                "{topic:<width$}  {:>8}  {:>8}  {:>9}",
                pct(s.ap),
                pct(s.p_at_k),
                s.positives
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}",
            "overall",
            pct(self.overall_map),
            pct(self.overall_p_at_k)
        )
        .unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: Mode,
    pub map: f64,
    pub p_at_k: f64,
    pub lexicon_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub k: usize,
    /// Rows ordered TII, TI, T.
    pub rows: Vec<ModeRow>,
    /// MAP(TII) >= MAP(TI) >= MAP(T) over the modes present.
    pub ordered: bool,
}

pub fn compare_modes(reports: &[EvalReport]) -> Result<ModeComparison> {
    let k = reports.first().map_or(DEFAULT_EVAL_K, |r| r.k);
    if let Some(r) = reports.iter().find(|r| r.k != k) {
        return Err(Error::Integrity(format!(
            "reports disagree on k ({} vs {k})",
            r.k
        )));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert(r.mode) {
            return Err(Error::Integrity(format!("mode {} reported twice", r.mode)));
        }
    }
    let mut rows: Vec<ModeRow> = reports
        .iter()
        .map(|r| ModeRow {
            mode: r.mode,
            map: r.overall_map,
            p_at_k: r.overall_p_at_k,
            lexicon_size: r.lexicon_size,
        })
        .collect();
    rows.sort_by(|a, b| b.mode.cmp(&a.mode));
    let ordered = rows.windows(2).all(|w| w[0].map >= w[1].map);
    Ok(ModeComparison { k, rows, ordered })
}

impl ModeComparison {
    /// Methods as columns; MAP, P@k and lexicon size as rows (percent).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let col = 14;
        write!(out, "{:<8}", "Method").unwrap();
        for row in &self.rows {
            write!(out, "  {:>col$}", row.mode.label()).unwrap();
        }
        out.push('\n');
        write!(out, "{:<8}", "MAP").unwrap();
        for row in &self.rows {
            write!(out, "  {:>col$}", pct(row.map)).unwrap();
        }
        out.push('\n');
        write!(out, "{:<8}", format!("P@{}", self.k)).unwrap();
        for row in &self.rows {
            write!(out, "  {:>col$}", pct(row.p_at_k)).unwrap();
        }
        out.push('\n');
        write!(out, "{:<8}", "Lexicon").unwrap();
        for row in &self.rows {
            let size = row
                .lexicon_size
                .map_or_else(|| "-".to_string(), |s| s.to_string());
            write!(out, "  {size:>col$}").unwrap();
        }
        out.push('\n');
        writeln!(out, "ordered (MAP TII >= TI >= T): {}", self.ordered).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(topic: &str, ids: &[&str]) -> Ranking<String> {
        Ranking::from_scores(
            topic,
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), -(i as f64)))
                .collect(),
        )
        .unwrap()
    }

    fn gold(pairs: &[(&str, &[&str])]) -> GoldLabels {
        pairs
            .iter()
            .map(|(id, t)| (id.to_string(), t.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn perfect_ranking() {
        let g = gold(&[
            ("a", &["sky"]),
            ("b", &["sky"]),
            ("c", &["sky"]),
            ("d", &[]),
            ("e", &[]),
        ]);
        let rankings = BTreeMap::from([(
            "sky".to_string(),
            ranking("sky", &["a", "b", "c", "d", "e"]),
        )]);
        let r = evaluate(&rankings, &g, 3, Mode::TII).unwrap();
        assert_eq!(r.per_topic["sky"].ap, 1.0);
        assert_eq!(r.per_topic["sky"].p_at_k, 1.0);
        assert_eq!(r.per_topic["sky"].positives, 3);
        assert_eq!(r.overall_map, 1.0);
    }

    #[test]
    fn zero_positive_topic_is_kept() {
        let g = gold(&[("a", &["sky"]), ("b", &[])]);
        let rankings = BTreeMap::from([
            ("sky".to_string(), ranking("sky", &["b", "a"])),
            ("baby".to_string(), ranking("baby", &["a", "b"])),
        ]);
        let r = evaluate(&rankings, &g, 50, Mode::T).unwrap();
        assert_eq!(r.per_topic["baby"].ap, 0.0);
        assert_eq!(r.per_topic["baby"].positives, 0);
        assert_eq!(r.overall_map, 0.25);
        assert_eq!(r.overall_p_at_k, 0.01);
    }

    #[test]
    fn missing_gold_is_integrity_error() {
        let g = gold(&[("a", &["sky"])]);
        let rankings = BTreeMap::from([("sky".to_string(), ranking("sky", &["a", "zz"]))]);
        assert!(matches!(
            evaluate(&rankings, &g, 50, Mode::T),
            Err(Error::Integrity(_))
        ));
    }

    fn report(mode: Mode, map: f64, k: usize) -> EvalReport {
        EvalReport {
            mode,
            k,
            per_topic: BTreeMap::new(),
            overall_map: map,
            overall_p_at_k: map,
            lexicon_size: Some(10),
        }
    }

    #[test]
    fn comparison_flags() {
        let same = compare_modes(&[
            report(Mode::T, 0.4, 50),
            report(Mode::TI, 0.4, 50),
            report(Mode::TII, 0.4, 50),
        ])
        .unwrap();
        assert!(same.ordered);
        let good = compare_modes(&[
            report(Mode::T, 0.3, 50),
            report(Mode::TII, 0.6, 50),
            report(Mode::TI, 0.4, 50),
        ])
        .unwrap();
        assert!(good.ordered);
        assert_eq!(good.rows[0].mode, Mode::TII);
        let bad = compare_modes(&[report(Mode::T, 0.5, 50), report(Mode::TI, 0.4, 50)]).unwrap();
        assert!(!bad.ordered);
        assert!(compare_modes(&[report(Mode::T, 0.5, 50), report(Mode::TI, 0.4, 10)]).is_err());
        let table = good.to_table();
        assert!(table.contains("Gist(S_t,i,I)") && table.contains("60.00"));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("tii".parse::<Mode>().unwrap(), Mode::TII);
        assert!("X".parse::<Mode>().is_err());
    }
}
