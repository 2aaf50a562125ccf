//! Knowledge graph of article and category concepts.
//!
//! Nodes are Wikipedia-style articles and categories. Category links form the
//! traversable structure (treated as undirected); redirects only alias titles.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(NodeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Article,
    Category,
}

impl NodeKind {
    fn as_str(self) -> &'static str {
        match self {
            NodeKind::Article => "article",
            NodeKind::Category => "category",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub title: String,
    pub redirect_titles: BTreeSet<String>,
    pub abstract_text: String,
}

impl ConceptNode {
    pub fn article(id: u64, title: &str) -> Self {
        ConceptNode {
            id: NodeId(id),
            kind: NodeKind::Article,
            title: normalize_title(title),
            redirect_titles: BTreeSet::new(),
            abstract_text: String::new(),
        }
    }

    pub fn category(id: u64, title: &str) -> Self {
        ConceptNode {
            kind: NodeKind::Category,
            ..ConceptNode::article(id, title)
        }
    }

    pub fn with_redirects<'a>(mut self, titles: impl IntoIterator<Item = &'a str>) -> Self {
        self.redirect_titles
            .extend(titles.into_iter().map(normalize_title));
        self
    }

    pub fn with_abstract(mut self, text: &str) -> Self {
        self.abstract_text = text.to_string();
        self
    }

    pub fn is_category(&self) -> bool {
        self.kind == NodeKind::Category
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    CategoryLink,
    Redirect,
}

impl EdgeKind {
    fn as_str(self) -> &'static str {
        match self {
            EdgeKind::CategoryLink => "category_link",
            EdgeKind::Redirect => "redirect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

impl KgEdge {
    pub fn category_link(src: u64, dst: u64) -> Self {
        KgEdge {
            src: NodeId(src),
            dst: NodeId(dst),
            kind: EdgeKind::CategoryLink,
        }
    }

    pub fn redirect(src: u64, dst: u64) -> Self {
        KgEdge {
            src: NodeId(src),
            dst: NodeId(dst),
            kind: EdgeKind::Redirect,
        }
    }
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn normalize_title(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Immutable, fully indexed knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: Vec<ConceptNode>,
    edges: Vec<KgEdge>,
    slots: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<NodeId>>,
    title_index: HashMap<String, NodeId>,
}

impl KnowledgeGraph {
    /// Validates and indexes the given nodes and edges.
    ///
    /// Duplicate edge triples are collapsed; self-loops, category links into
    /// articles, unknown endpoints and ambiguous titles are integrity errors.
    pub fn from_parts(mut nodes: Vec<ConceptNode>, edges: Vec<KgEdge>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        let mut slots = HashMap::with_capacity(nodes.len());
        for (slot, node) in nodes.iter_mut().enumerate() {
            if slots.insert(node.id, slot).is_some() {
                return Err(Error::Integrity(format!("duplicate node id {}", node.id)));
            }
            node.title = normalize_title(&node.title);
            if node.title.is_empty() {
                return Err(Error::Integrity(format!(
                    "node {} has an empty title",
                    node.id
                )));
            }
            if node.is_category()
                && (!node.redirect_titles.is_empty() || !node.abstract_text.is_empty())
            {
                return Err(Error::Integrity(format!(
                    "category node {} ({}) carries redirects or an abstract",
                    node.id, node.title
                )));
            }
        }

        let mut unique: BTreeSet<KgEdge> = BTreeSet::new();
        for edge in edges {
            for end in [edge.src, edge.dst] {
                if !slots.contains_key(&end) {
                    return Err(Error::Integrity(format!(
                        "edge {} -> {} references unknown node id {}",
                        edge.src, edge.dst, end
                    )));
                }
            }
            if edge.src == edge.dst {
                return Err(Error::Integrity(format!("self-loop on node {}", edge.src)));
            }
            if edge.kind == EdgeKind::CategoryLink && !nodes[slots[&edge.dst]].is_category() {
                return Err(Error::Integrity(format!(
                    "category link {} -> {} points at a non-category node",
                    edge.src, edge.dst
                )));
            }
            if !unique.insert(edge) {
                log::warn!(
                    "dropping duplicate {} edge {} -> {}",
                    edge.kind.as_str(),
                    edge.src,
                    edge.dst
                );
            }
        }
        let edges: Vec<KgEdge> = unique.into_iter().collect();

        let mut adjacency: Vec<Vec<NodeId>> = vec![Vec::new(); nodes.len()];
        let mut redirect_target: HashMap<NodeId, NodeId> = HashMap::new();
        for edge in &edges {
            match edge.kind {
                EdgeKind::CategoryLink => {
                    adjacency[slots[&edge.src]].push(edge.dst);
                    adjacency[slots[&edge.dst]].push(edge.src);
                }
                EdgeKind::Redirect => {
                    if redirect_target.insert(edge.src, edge.dst).is_some() {
                        return Err(Error::Integrity(format!(
                            "node {} redirects to more than one target",
                            edge.src
                        )));
                    }
                }
            }
        }
        for neighbors in &mut adjacency {
            neighbors.sort_unstable();
            neighbors.dedup();
        }

        let resolve = |start: NodeId| -> Result<NodeId> {
            let mut current = start;
            for _ in 0..=redirect_target.len() {
                match redirect_target.get(&current) {
                    Some(&next) => current = next,
                    None => return Ok(current),
                }
            }
            Err(Error::Integrity(format!(
                "redirect cycle through node {start}"
            )))
        };

        let mut title_index: HashMap<String, NodeId> = HashMap::new();
        for node in &nodes {
            if let Some(prev) = title_index.insert(node.title.clone(), node.id) {
                return Err(Error::Integrity(format!(
                    "duplicate title {:?} (nodes {} and {})",
                    node.title, prev, node.id
                )));
            }
        }
        // Node titles take precedence; redirect resolution is applied afterwards.
        for node in &nodes {
            let target = resolve(node.id)?;
            if target != node.id {
                title_index.insert(node.title.clone(), target);
            }
        }
        for node in &nodes {
            let target = resolve(node.id)?;
            for alias in &node.redirect_titles {
                if alias.is_empty() || *alias == node.title {
                    continue;
                }
                match title_index.get(alias) {
                    Some(&existing) if existing == target => {}
                    Some(&existing) => {
                        return Err(Error::Integrity(format!(
                            "duplicate title {alias:?} (redirect of node {} collides with node {existing})",
                            node.id
                        )));
                    }
                    None => {
                        title_index.insert(alias.clone(), target);
                    }
                }
            }
        }

        Ok(KnowledgeGraph {
            nodes,
            edges,
            slots,
            adjacency,
            title_index,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> &[ConceptNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[KgEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&ConceptNode> {
        self.slots.get(&id).map(|&slot| &self.nodes[slot])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.slots.contains_key(&id)
    }

    /// Undirected category-link neighbors, ascending by id.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        self.slots
            .get(&id)
            .map(|&slot| self.adjacency[slot].as_slice())
            .unwrap_or(&[])
    }

    pub fn is_category(&self, id: NodeId) -> bool {
        self.node(id).is_some_and(ConceptNode::is_category)
    }

    /// Normalizes `mention` the same way titles are and resolves it through
    /// titles and redirects.
    pub fn lookup_title(&self, mention: &str) -> Option<NodeId> {
        self.title_index.get(&normalize_title(mention)).copied()
    }

    pub fn title_entries(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.title_index.iter().map(|(t, &id)| (t.as_str(), id))
    }

    /// Writes the graph in the TSV formats read by [`load_graph`].
    pub fn write_tsv(&self, nodes_path: &Path, edges_path: &Path) -> Result<()> {
        let mut out = String::new();
        for node in &self.nodes {
            let redirects: Vec<&str> = node.redirect_titles.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                node.id,
                node.kind.as_str(),
                node.title,
                redirects.join("|"),
                sanitize_field(&node.abstract_text)
            ));
        }
        write_file(nodes_path, &out)?;

        let mut out = String::new();
        for edge in &self.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                edge.src,
                edge.dst,
                edge.kind.as_str()
            ));
        }
        write_file(edges_path, &out)
    }
}

fn sanitize_field(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c == '\t' || c == '\n' || c == '\r' {
                ' '
            } else {
                c
            }
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(contents.as_bytes())
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_nodes(path: &Path, text: &str) -> Result<Vec<ConceptNode>> {
    let mut nodes = Vec::new();
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id: NodeId = fields[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid node id {:?}", fields[0])))?;
        let kind = match fields[1].trim() {
            "article" => NodeKind::Article,
            "category" => NodeKind::Category,
            other => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("unknown node kind {other:?}"),
                ))
            }
        };
        let title = normalize_title(fields[2]);
        if title.is_empty() {
            return Err(parse_err(path, lineno, "empty title"));
        }
        let redirect_titles = fields
            .get(3)
            .map(|f| {
                f.split('|')
                    .map(normalize_title)
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        let abstract_text = fields
            .get(4)
            .map(|f| f.trim().to_string())
            .unwrap_or_default();
        nodes.push(ConceptNode {
            id,
            kind,
            title,
            redirect_titles,
            abstract_text,
        });
    }
    Ok(nodes)
}

pub fn parse_edges(path: &Path, text: &str) -> Result<Vec<KgEdge>> {
    let mut edges = Vec::new();
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let src: NodeId = fields[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid source id {:?}", fields[0])))?;
        let dst: NodeId = fields[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid target id {:?}", fields[1])))?;
        let kind = match fields[2].trim() {
            "category_link" => EdgeKind::CategoryLink,
            "redirect" => EdgeKind::Redirect,
            other => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("unknown edge kind {other:?}"),
                ))
            }
        };
        edges.push(KgEdge { src, dst, kind });
    }
    Ok(edges)
}

/// Reads the node and edge TSV files and builds an indexed graph.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<KnowledgeGraph> {
    let nodes_text = fs::read_to_string(nodes_path).map_err(|e| Error::io(nodes_path, e))?;
    let edges_text = fs::read_to_string(edges_path).map_err(|e| Error::io(edges_path, e))?;
    let nodes = parse_nodes(nodes_path, &nodes_text)?;
    let edges = parse_edges(edges_path, &edges_text)?;
    KnowledgeGraph::from_parts(nodes, edges)
}
