//! Sixteen-dimensional description of a candidate concept within one
//! instance's query graph.
//!
//! The dimensions fall into four families: graph connectivity (1-5),
//! cluster and relatedness structure (6-9), origin booleans (10-12, 16) and
//! article text (13-15). Order and names are frozen; model files record the
//! names and refuse to load against a different list.

pub mod centrality;
pub mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use centrality::{betweenness, pagerank};
pub use text::{jaccard, tokenize, IdfTable};

use crate::cluster::{relatedness_slots, Partition};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NodeId};
use crate::linking::{Instance, LinkMode};
use crate::query_graph::QueryGraph;

pub const FEATURE_COUNT: usize = 16;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "degree_centrality",
    "betweenness",
    "closeness",
    "pagerank",
    "seeds_within_2hops",
    "is_intermediate",
    "cluster_size_ratio",
    "mean_intra_cluster_relatedness",
    "mean_seed_relatedness",
    "origin_tag",
    "origin_image",
    "origin_both",
    "title_token_jaccard",
    "abstract_tfidf_cosine",
    "log_abstract_length",
    "is_category",
];

/// Zero-based indices of the boolean dimensions.
pub const BOOLEAN_FEATURES: [usize; 5] = [5, 9, 10, 11, 15];

/// Zero-based indices of dimensions bounded to `[0, 1]`.
const UNIT_FEATURES: [usize; 9] = [0, 1, 2, 3, 4, 6, 7, 8, 12];

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.0[i])
    }

    /// Checks finiteness and the boolean and unit-interval ranges.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Integrity(format!(
                    "feature {} is {v}",
                    FEATURE_NAMES[i]
                )));
            }
        }
        for &i in &BOOLEAN_FEATURES {
            if self.0[i] != 0.0 && self.0[i] != 1.0 {
                return Err(Error::Integrity(format!(
                    "boolean feature {} is {}",
                    FEATURE_NAMES[i], self.0[i]
                )));
            }
        }
        for &i in &UNIT_FEATURES {
            if !(0.0..=1.0 + 1e-12).contains(&self.0[i]) {
                return Err(Error::Integrity(format!(
                    "feature {} = {} is outside [0, 1]",
                    FEATURE_NAMES[i], self.0[i]
                )));
            }
        }
        Ok(())
    }
}

/// Read-only inputs shared by every instance: the graph, its IDF table and
/// the link mode that decides which mentions the text features see.
pub struct FeatureContext<'g> {
    pub graph: &'g KnowledgeGraph,
    pub idf: IdfTable,
    pub mode: LinkMode,
}

impl<'g> FeatureContext<'g> {
    pub fn new(graph: &'g KnowledgeGraph, mode: LinkMode) -> Self {
        FeatureContext {
            graph,
            idf: IdfTable::from_graph(graph),
            mode,
        }
    }
}

/// Per-instance precomputation: centralities and mention tokens.
pub struct QueryFeatures<'a> {
    ctx: &'a FeatureContext<'a>,
    qg: &'a QueryGraph,
    partition: &'a Partition,
    betweenness: Vec<f64>,
    pagerank: Vec<f64>,
    seed_slots: Vec<usize>,
    mention_tokens: Vec<String>,
    mention_set: BTreeSet<String>,
}

impl<'a> QueryFeatures<'a> {
    pub fn new(
        ctx: &'a FeatureContext<'a>,
        qg: &'a QueryGraph,
        partition: &'a Partition,
        instance: &Instance,
    ) -> Self {
        let mention_tokens: Vec<String> = instance.mentions(ctx.mode).flat_map(tokenize).collect();
        let mention_set = mention_tokens.iter().cloned().collect();
        let seed_slots = qg.seeds().keys().filter_map(|&id| qg.slot(id)).collect();
        QueryFeatures {
            ctx,
            qg,
            partition,
            betweenness: centrality::betweenness_slots(qg.adjacency()),
            pagerank: centrality::pagerank_slots(
                qg.adjacency(),
                PAGERANK_DAMPING,
                PAGERANK_TOLERANCE,
            ),
            seed_slots,
            mention_tokens,
            mention_set,
        }
    }

    pub fn extract(&self, node: NodeId) -> Result<FeatureVector> {
        let qg = self.qg;
        let slot = qg
            .slot(node)
            .ok_or_else(|| Error::NotFound(format!("node {node} is not in the query graph")))?;
        let cluster = self
            .partition
            .cluster_of(node)
            .ok_or_else(|| Error::Integrity(format!("node {node} is not assigned to a cluster")))?;
        let concept = self.ctx.graph.node(node).ok_or_else(|| {
            Error::Integrity(format!("node {node} is not in the knowledge graph"))
        })?;

        let n = qg.len();
        let degree = qg.adjacency()[slot].len();
        let row = qg.distance_row(slot);

        let seeds_near = self
            .seed_slots
            .iter()
            .filter(|&&s| s != slot && row[s].is_some_and(|d| d <= 2))
            .count();
        let seeds_within_2hops = if self.seed_slots.is_empty() {
            0.0
        } else {
            seeds_near as f64 / self.seed_slots.len() as f64
        };

        let members: Vec<usize> = self
            .partition
            .members(cluster)
            .filter_map(|id| qg.slot(id))
            .collect();
        let cluster_size_ratio = members.len() as f64 / n as f64;
        let mean_intra = mean(
            members
                .iter()
                .filter(|&&m| m != slot)
                .map(|&m| relatedness_slots(qg, slot, m)),
        );
        let mean_seed = mean(
            self.seed_slots
                .iter()
                .filter(|&&s| s != slot)
                .map(|&s| relatedness_slots(qg, slot, s)),
        );

        let origin = qg.seeds().get(&node).copied().unwrap_or_default();
        let title_tokens: BTreeSet<String> = tokenize(&concept.title).into_iter().collect();
        let abstract_tokens = tokenize(&concept.abstract_text);

        let values = [
            if n > 1 {
                degree as f64 / (n - 1) as f64
            } else {
                0.0
            },
            self.betweenness[slot],
            centrality::closeness_slot(qg, slot),
            self.pagerank[slot],
            seeds_within_2hops,
            flag(qg.is_intermediate(node)),
            cluster_size_ratio,
            mean_intra,
            mean_seed,
            flag(origin.from_tags),
            flag(origin.from_image),
            flag(origin.both()),
            jaccard(&title_tokens, &self.mention_set),
            self.ctx.idf.cosine(&abstract_tokens, &self.mention_tokens),
            (1.0 + abstract_tokens.len() as f64).ln(),
            flag(concept.is_category()),
        ];
        Ok(FeatureVector(values))
    }

    /// Vectors for every query-graph node, ascending by node id.
    pub fn extract_all(&self) -> Result<Vec<(NodeId, FeatureVector)>> {
        self.qg
            .nodes()
            .iter()
            .map(|&id| self.extract(id).map(|v| (id, v)))
            .collect()
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Feature vector of one candidate. Prefer [`QueryFeatures`] when extracting
/// several nodes of the same instance.
pub fn extract_features(
    ctx: &FeatureContext<'_>,
    qg: &QueryGraph,
    partition: &Partition,
    instance: &Instance,
    node: NodeId,
) -> Result<FeatureVector> {
    QueryFeatures::new(ctx, qg, partition, instance).extract(node)
}

/// Min-max scales each non-boolean dimension to `[0, 1]` across one
/// instance's candidates; constant dimensions become 0.
pub fn normalize_per_query(vectors: &[FeatureVector]) -> Vec<FeatureVector> {
    let mut out = vectors.to_vec();
    for dim in 0..FEATURE_COUNT {
        let is_boolean = BOOLEAN_FEATURES.contains(&dim)
            && vectors.iter().all(|v| v.0[dim] == 0.0 || v.0[dim] == 1.0);
        if is_boolean {
            continue;
        }
        let (lo, hi) = vectors
            .iter()
            .map(|v| v.0[dim])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
        let span = hi - lo;
        for v in out.iter_mut() {
            v.0[dim] = if span > 0.0 {
                (v.0[dim] - lo) / span
            } else {
                0.0
            };
        }
    }
    out
}

/// One line of the feature dump exchanged between pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub instance_id: String,
    pub node_id: NodeId,
    pub values: FeatureVector,
    pub grade: Option<u8>,
}

pub fn feature_dump_header() -> String {
    let mut header = String::from("instance_id\tnode_id");
    for i in 1..=FEATURE_COUNT {
        write!(header, "\tf{i}").unwrap();
    }
    header.push_str("\tgrade");
    header
}

pub fn write_feature_dump(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut out = feature_dump_header();
    out.push('\n');
    for row in rows {
        write!(out, "{}\t{}", row.instance_id, row.node_id).unwrap();
        for v in row.values.0 {
            write!(out, "\t{v}").unwrap();
        }
        match row.grade {
            Some(g) => writeln!(out, "\t{g}").unwrap(),
            None => out.push_str("\t\n"),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_feature_dump(path: &Path) -> Result<Vec<FeatureRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_dump(path, &text)
}

pub fn parse_feature_dump(path: &Path, text: &str) -> Result<Vec<FeatureRow>> {
    let err = |line: usize, message: String| Error::Parse {
        file: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let header_ok = lines.next().is_some_and(|(_, h)| {
        let expected = feature_dump_header();
        h == expected || Some(h) == expected.strip_suffix("\tgrade")
    });
    if !header_ok {
        return Err(err(1, "missing or unexpected feature dump header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != FEATURE_COUNT + 2 && fields.len() != FEATURE_COUNT + 3 {
            return Err(err(
                lineno,
                format!(
                    "expected {} fields, found {}",
                    FEATURE_COUNT + 3,
                    fields.len()
                ),
            ));
        }
        let node_id = fields[1]
            .parse()
            .map_err(|_| err(lineno, format!("invalid node id {:?}", fields[1])))?;
        let mut values = [0.0; FEATURE_COUNT];
        for (d, slot) in values.iter_mut().enumerate() {
            *slot = fields[d + 2].parse().map_err(|_| {
                err(
                    lineno,
                    format!("invalid value {:?} for f{}", fields[d + 2], d + 1),
                )
            })?;
        }
        let grade = match fields.get(FEATURE_COUNT + 2).map(|g| g.trim()) {
            None | Some("") => None,
            Some(g) => Some(
                g.parse::<u8>()
                    .map_err(|_| err(lineno, format!("invalid grade {g:?}")))?,
            ),
        };
        rows.push(FeatureRow {
            instance_id: fields[0].to_string(),
            node_id,
            values: FeatureVector(values),
            grade,
        });
    }
    Ok(rows)
}

/// Groups dump rows by instance, keeping file order within each group.
pub fn group_rows(rows: Vec<FeatureRow>) -> BTreeMap<String, Vec<FeatureRow>> {
    let mut groups: BTreeMap<String, Vec<FeatureRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.instance_id.clone()).or_default().push(row);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_relatedness_graph, louvain};
    use crate::kg::{ConceptNode, KgEdge};
    use crate::linking::link_instance;
    use crate::query_graph::build_query_graph;

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            vec![
                ConceptNode::category(0, "motor vehicles"),
                ConceptNode::article(1, "car").with_abstract("A car is a wheeled motor vehicle."),
                ConceptNode::article(2, "volvo").with_abstract("Volvo makes cars and trucks."),
                ConceptNode::article(3, "tree").with_abstract("A tree is a plant."),
            ],
            vec![KgEdge::category_link(1, 0), KgEdge::category_link(2, 0)],
        )
        .unwrap()
    }

    fn features_for(instance: &Instance, mode: LinkMode) -> Vec<(NodeId, FeatureVector)> {
        let g = graph();
        let ctx = FeatureContext::new(&g, mode);
        let qg = build_query_graph(&g, &link_instance(&g, instance, mode)).unwrap();
        let partition = louvain(&build_relatedness_graph(&qg));
        QueryFeatures::new(&ctx, &qg, &partition, instance)
            .extract_all()
            .unwrap()
    }

    #[test]
    fn intermediate_booleans() {
        let inst = Instance::new("a")
            .with_tags(&["volvo"])
            .with_image_labels(&["car"]);
        let fv = features_for(&inst, LinkMode::TagsAndImage);
        let (id, v) = fv[0];
        assert_eq!(id, NodeId(0));
        let picked: Vec<f64> = [5, 9, 10, 11, 15].iter().map(|&i| v.0[i]).collect();
        assert_eq!(picked, vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        // the hub sits between both seeds
        assert_eq!(v.get("betweenness"), Some(1.0));
        assert_eq!(v.get("degree_centrality"), Some(1.0));
        for (_, v) in &fv {
            v.validate().unwrap();
        }
    }

    #[test]
    fn isolated_single_seed() {
        let inst = Instance::new("a").with_tags(&["tree"]);
        let fv = features_for(&inst, LinkMode::TagsOnly);
        assert_eq!(fv.len(), 1);
        let v = fv[0].1;
        for name in [
            "degree_centrality",
            "betweenness",
            "closeness",
            "seeds_within_2hops",
        ] {
            assert_eq!(v.get(name), Some(0.0), "{name}");
        }
        assert_eq!(v.get("origin_tag"), Some(1.0));
        assert_eq!(v.get("pagerank"), Some(1.0));
        assert_eq!(v.get("cluster_size_ratio"), Some(1.0));
        assert_eq!(v.get("is_category"), Some(0.0));
    }

    #[test]
    fn title_jaccard_half() {
        let inst = Instance::new("a").with_tags(&["car", "volvo"]);
        let fv = features_for(&inst, LinkMode::TagsOnly);
        let car = fv.iter().find(|(id, _)| *id == NodeId(1)).unwrap().1;
        assert_eq!(car.get("title_token_jaccard"), Some(0.5));
        assert!(car.get("abstract_tfidf_cosine").unwrap() > 0.0);
        let expected_len = (1.0f64 + 7.0).ln();
        assert!((car.get("log_abstract_length").unwrap() - expected_len).abs() < 1e-12);
    }

    #[test]
    fn text_features_follow_link_mode() {
        let inst = Instance::new("a")
            .with_tags(&["volvo"])
            .with_image_labels(&["car"]);
        let fv = features_for(&inst, LinkMode::TagsOnly);
        let volvo = fv[0].1;
        assert_eq!(volvo.get("title_token_jaccard"), Some(1.0));
    }

    #[test]
    fn normalization_rules() {
        let mut v = FeatureVector([3.0; FEATURE_COUNT]);
        v.0[5] = 1.0;
        let single = normalize_per_query(&[v]);
        for d in 0..FEATURE_COUNT {
            let expected = if d == 5 { 1.0 } else { 0.0 };
            assert_eq!(single[0].0[d], expected, "dim {d}");
        }

        let rows: Vec<FeatureVector> = [2.0, 4.0, 6.0]
            .iter()
            .map(|&x| FeatureVector([x; FEATURE_COUNT]))
            .collect();
        let scaled = normalize_per_query(&rows);
        assert_eq!(
            scaled.iter().map(|v| v.0[0]).collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0]
        );
        // boolean slots holding non-boolean values are scaled like any other
        assert_eq!(scaled[1].0[5], 0.5);
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.tsv");
        let rows = vec![
            FeatureRow {
                instance_id: "i1".into(),
                node_id: NodeId(4),
                values: FeatureVector([0.125; FEATURE_COUNT]),
                grade: Some(5),
            },
            FeatureRow {
                instance_id: "i2".into(),
                node_id: NodeId(7),
                values: FeatureVector([1.0 / 3.0; FEATURE_COUNT]),
                grade: None,
            },
        ];
        write_feature_dump(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("instance_id\tnode_id\tf1\t"));
        assert_eq!(read_feature_dump(&path).unwrap(), rows);
    }

    #[test]
    fn dump_rejects_bad_values() {
        let text = format!(
            "{}\ni1\t3\tx{}\t\n",
            feature_dump_header(),
            "\t0".repeat(15)
        );
        let err = parse_feature_dump(Path::new("f.tsv"), &text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
