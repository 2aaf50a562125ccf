//! Query-specific subgraph expansion.
//!
//! Seeds are expanded with every category node lying on some shortest path of
//! at most [`MAX_PATH_LEN`] edges between two distinct seeds. Membership of a
//! node `v` on a shortest `s`-`t` path is decided with two BFS frontiers:
//! `d(s,v) + d(v,t) = d(s,t)`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NodeId};
use crate::linking::{Origin, SeedSet};

/// Longest seed-to-seed path (in edges) that contributes intermediates.
pub const MAX_PATH_LEN: u32 = 4;

/// Unweighted shortest-path distances from `source` over undirected category
/// links, omitting nodes farther than `cutoff`.
pub fn bfs_distances(
    graph: &KnowledgeGraph,
    source: NodeId,
    cutoff: u32,
) -> Result<HashMap<NodeId, u32>> {
    if !graph.contains(source) {
        return Err(Error::NotFound(format!(
            "node {source} is not in the graph"
        )));
    }
    let mut dist = HashMap::from([(source, 0u32)]);
    let mut queue = VecDeque::from([source]);
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if d == cutoff {
            continue;
        }
        for &next in graph.neighbors(node) {
            if !dist.contains_key(&next) {
                dist.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "QueryGraphRecord", try_from = "QueryGraphRecord")]
pub struct QueryGraph {
    instance_id: String,
    seeds: BTreeMap<NodeId, Origin>,
    intermediates: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
    order: Vec<NodeId>,
    slots: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<usize>>,
    distances: Vec<Vec<Option<u32>>>,
}

impl QueryGraph {
    /// Builds a query graph from explicit parts. Edges are undirected and may
    /// be given in either orientation; every endpoint must be a seed or an
    /// intermediate.
    pub fn from_parts(
        instance_id: &str,
        seeds: BTreeMap<NodeId, Origin>,
        intermediates: BTreeSet<NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        if let Some(both) = intermediates.iter().find(|id| seeds.contains_key(id)) {
            return Err(Error::Integrity(format!(
                "node {both} is both a seed and an intermediate"
            )));
        }
        let order: Vec<NodeId> = seeds
            .keys()
            .chain(intermediates.iter())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let slots: HashMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Integrity(format!("self-loop on node {a}")));
            }
            for end in [a, b] {
                if !slots.contains_key(&end) {
                    return Err(Error::Integrity(format!(
                        "edge endpoint {end} is not a query-graph node"
                    )));
                }
            }
            edge_set.insert((a.min(b), a.max(b)));
        }

        let mut adjacency = vec![Vec::new(); order.len()];
        for &(a, b) in &edge_set {
            adjacency[slots[&a]].push(slots[&b]);
            adjacency[slots[&b]].push(slots[&a]);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let distances = (0..order.len()).map(|s| bfs_slots(&adjacency, s)).collect();

        Ok(QueryGraph {
            instance_id: instance_id.to_string(),
            seeds,
            intermediates,
            edges: edge_set,
            order,
            slots,
            adjacency,
            distances,
        })
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    /// Number of nodes (seeds plus intermediates).
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// All nodes in ascending id order; position `i` is the node's slot.
    pub fn nodes(&self) -> &[NodeId] {
        &self.order
    }

    pub fn seeds(&self) -> &BTreeMap<NodeId, Origin> {
        &self.seeds
    }

    pub fn intermediates(&self) -> &BTreeSet<NodeId> {
        &self.intermediates
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.slots.contains_key(&id)
    }

    pub fn slot(&self, id: NodeId) -> Option<usize> {
        self.slots.get(&id).copied()
    }

    pub fn is_seed(&self, id: NodeId) -> bool {
        self.seeds.contains_key(&id)
    }

    pub fn is_intermediate(&self, id: NodeId) -> bool {
        self.intermediates.contains(&id)
    }

    /// Neighbor slots of the node in slot `slot`.
    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn degree(&self, id: NodeId) -> Option<usize> {
        self.slot(id).map(|s| self.adjacency[s].len())
    }

    /// Hop distance inside the query graph; `None` when unreachable.
    pub fn distance(&self, a: NodeId, b: NodeId) -> Result<Option<u32>> {
        let sa = self.slot(a).ok_or_else(|| not_in_query_graph(a))?;
        let sb = self.slot(b).ok_or_else(|| not_in_query_graph(b))?;
        Ok(self.distances[sa][sb])
    }

    /// Distance row of slot `slot`, indexed by slot.
    pub fn distance_row(&self, slot: usize) -> &[Option<u32>] {
        &self.distances[slot]
    }
}

fn not_in_query_graph(id: NodeId) -> Error {
    Error::NotFound(format!("node {id} is not in the query graph"))
}

fn bfs_slots(adjacency: &[Vec<usize>], source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adjacency.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adjacency[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn check_seeds(graph: &KnowledgeGraph, seedset: &SeedSet) -> Result<()> {
    match seedset.ids().find(|&id| !graph.contains(id)) {
        Some(id) => Err(Error::Integrity(format!(
            "seed {id} of instance {:?} is not in the knowledge graph",
            seedset.instance_id
        ))),
        None => Ok(()),
    }
}

fn induced_edges(graph: &KnowledgeGraph, nodes: &BTreeSet<NodeId>) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    for &a in nodes {
        for &b in graph.neighbors(a) {
            if a < b && nodes.contains(&b) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Category nodes on shortest seed-to-seed paths of length at most
/// [`MAX_PATH_LEN`], excluding the seeds themselves.
pub fn collect_intermediates(
    graph: &KnowledgeGraph,
    seedset: &SeedSet,
) -> Result<BTreeSet<NodeId>> {
    check_seeds(graph, seedset)?;
    let seeds: Vec<NodeId> = seedset.ids().collect();
    let frontiers = seeds
        .iter()
        .map(|&s| bfs_distances(graph, s, MAX_PATH_LEN))
        .collect::<Result<Vec<_>>>()?;

    let mut intermediates = BTreeSet::new();
    for (i, from_s) in frontiers.iter().enumerate() {
        for (j, from_t) in frontiers.iter().enumerate().skip(i + 1) {
            let Some(&total) = from_s.get(&seeds[j]) else {
                continue;
            };
            if total < 2 {
                continue;
            }
            for (&v, &dsv) in from_s {
                if dsv == 0 || dsv >= total {
                    continue;
                }
                if from_t.get(&v) == Some(&(total - dsv))
                    && graph.is_category(v)
                    && !seedset.seeds.contains_key(&v)
                {
                    intermediates.insert(v);
                }
            }
        }
    }
    Ok(intermediates)
}

/// Seeds plus intermediate categories, with all category links induced on
/// that node set. An empty seed set gives an empty query graph.
pub fn build_query_graph(graph: &KnowledgeGraph, seedset: &SeedSet) -> Result<QueryGraph> {
    let intermediates = collect_intermediates(graph, seedset)?;
    induced_query_graph(graph, seedset, intermediates)
}

/// Query graph restricted to the seeds (no intermediate expansion).
pub fn build_seed_graph(graph: &KnowledgeGraph, seedset: &SeedSet) -> Result<QueryGraph> {
    check_seeds(graph, seedset)?;
    induced_query_graph(graph, seedset, BTreeSet::new())
}

fn induced_query_graph(
    graph: &KnowledgeGraph,
    seedset: &SeedSet,
    intermediates: BTreeSet<NodeId>,
) -> Result<QueryGraph> {
    let nodes: BTreeSet<NodeId> = seedset.ids().chain(intermediates.iter().copied()).collect();
    let edges = induced_edges(graph, &nodes);
    QueryGraph::from_parts(
        &seedset.instance_id,
        seedset.seeds.clone(),
        intermediates,
        edges,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRecord {
    pub id: NodeId,
    pub from_tags: bool,
    pub from_image: bool,
}

/// JSON wire form of a [`QueryGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryGraphRecord {
    pub instance_id: String,
    pub seeds: Vec<SeedRecord>,
    pub intermediates: Vec<NodeId>,
    pub edges: Vec<[NodeId; 2]>,
}

impl From<QueryGraph> for QueryGraphRecord {
    fn from(qg: QueryGraph) -> Self {
        QueryGraphRecord {
            instance_id: qg.instance_id,
            seeds: qg
                .seeds
                .iter()
                .map(|(&id, o)| SeedRecord {
                    id,
                    from_tags: o.from_tags,
                    from_image: o.from_image,
                })
                .collect(),
            intermediates: qg.intermediates.into_iter().collect(),
            edges: qg.edges.into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

impl TryFrom<QueryGraphRecord> for QueryGraph {
    type Error = Error;

    fn try_from(rec: QueryGraphRecord) -> Result<Self> {
        let seeds = rec
            .seeds
            .iter()
            .map(|s| {
                (
                    s.id,
                    Origin {
                        from_tags: s.from_tags,
                        from_image: s.from_image,
                    },
                )
            })
            .collect();
        QueryGraph::from_parts(
            &rec.instance_id,
            seeds,
            rec.intermediates.into_iter().collect(),
            rec.edges.into_iter().map(|[a, b]| (a, b)),
        )
    }
}
