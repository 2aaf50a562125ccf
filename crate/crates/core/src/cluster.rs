//! Path-based relatedness between query-graph concepts and Louvain clustering
//! of the resulting weighted graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::NodeId;
use crate::query_graph::{QueryGraph, MAX_PATH_LEN};

/// Per-hop decay of the relatedness measure.
pub const RELATEDNESS_DECAY: f64 = 0.5;

/// Smallest modularity improvement that counts as a move.
pub const MIN_MODULARITY_GAIN: f64 = 1e-12;

fn decay(distance: Option<u32>) -> f64 {
    match distance {
        Some(d) if d <= MAX_PATH_LEN => RELATEDNESS_DECAY.powi(d as i32),
        _ => 0.0,
    }
}

/// `0.5^d` for the in-graph hop distance `d`; 0 beyond four hops or when
/// unreachable.
pub fn relatedness(qg: &QueryGraph, a: NodeId, b: NodeId) -> Result<f64> {
    Ok(decay(qg.distance(a, b)?))
}

/// Relatedness between the nodes in slots `a` and `b`.
pub(crate) fn relatedness_slots(qg: &QueryGraph, a: usize, b: usize) -> f64 {
    decay(qg.distance_row(a)[b])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    nodes: BTreeSet<NodeId>,
    weights: BTreeMap<(NodeId, NodeId), f64>,
}

impl WeightedGraph {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        WeightedGraph {
            nodes: nodes.into_iter().collect(),
            weights: BTreeMap::new(),
        }
    }

    /// Sets the weight of the unordered pair `{a, b}`. Zero weights remove the
    /// pair; self-pairs and unknown nodes are rejected.
    pub fn set_weight(&mut self, a: NodeId, b: NodeId, weight: f64) -> Result<()> {
        if a == b {
            return Err(Error::Integrity(format!("self-pair on node {a}")));
        }
        if !self.nodes.contains(&a) || !self.nodes.contains(&b) {
            return Err(Error::NotFound(format!(
                "pair ({a}, {b}) has an unknown endpoint"
            )));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::Integrity(format!(
                "invalid weight {weight} on ({a}, {b})"
            )));
        }
        let key = (a.min(b), a.max(b));
        if weight == 0.0 {
            self.weights.remove(&key);
        } else {
            self.weights.insert(key, weight);
        }
        Ok(())
    }

    pub fn weight(&self, a: NodeId, b: NodeId) -> f64 {
        self.weights
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    /// Nonzero weights keyed by `(smaller id, larger id)`.
    pub fn weights(&self) -> &BTreeMap<(NodeId, NodeId), f64> {
        &self.weights
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn build_relatedness_graph(qg: &QueryGraph) -> WeightedGraph {
    let nodes = qg.nodes();
    let mut wg = WeightedGraph::new(nodes.iter().copied());
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let w = relatedness_slots(qg, a, b);
            if w > 0.0 {
                wg.weights.insert((nodes[a], nodes[b]), w);
            }
        }
    }
    wg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<NodeId, usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn cluster_of(&self, node: NodeId) -> Option<usize> {
        self.assignment.get(&node).copied()
    }

    pub fn cluster_count(&self) -> usize {
        self.assignment.values().max().map_or(0, |&c| c + 1)
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.assignment
            .iter()
            .filter(move |(_, &c)| c == cluster)
            .map(|(&n, _)| n)
    }
}

/// Weighted Newman modularity of `assignment` on `wg`.
pub fn modularity(wg: &WeightedGraph, assignment: &BTreeMap<NodeId, usize>) -> Result<f64> {
    if let Some(missing) = wg.nodes.iter().find(|n| !assignment.contains_key(n)) {
        return Err(Error::Integrity(format!(
            "node {missing} is not assigned to a cluster"
        )));
    }
    let mut degree: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut total = 0.0;
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(a, b), &w) in &wg.weights {
        *degree.entry(a).or_default() += w;
        *degree.entry(b).or_default() += w;
        total += w;
        if assignment[&a] == assignment[&b] {
            *internal.entry(assignment[&a]).or_default() += w;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    let two_m = 2.0 * total;
    let mut cluster_degree: BTreeMap<usize, f64> = BTreeMap::new();
    for (node, k) in &degree {
        *cluster_degree.entry(assignment[node]).or_default() += k;
    }
    let q = cluster_degree
        .iter()
        .map(|(c, k)| {
            let inside = internal.get(c).copied().unwrap_or(0.0);
            2.0 * inside / two_m - (k / two_m).powi(2)
        })
        .sum();
    Ok(q)
}

/// Graph at one Louvain level: symmetric neighbor lists without self-loops,
/// plus per-node self-loop weight.
struct Level {
    neighbors: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn len(&self) -> usize {
        self.self_loops.len()
    }

    fn degrees(&self) -> Vec<f64> {
        self.neighbors
            .iter()
            .zip(&self.self_loops)
            .map(|(adj, s)| adj.iter().map(|(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect()
    }

    /// Moves nodes greedily in ascending order, starting from `community`,
    /// until a full pass makes no move. Returns whether anything moved.
    fn local_moves(&self, community: &mut [usize], total_weight: f64) -> bool {
        let n = self.len();
        let degree = self.degrees();
        let mut community_degree = vec![0.0; n];
        for (node, &c) in community.iter().enumerate() {
            community_degree[c] += degree[node];
        }
        let two_m = 2.0 * total_weight;
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for node in 0..n {
                let current = community[node];
                let k = degree[node];
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                for &(other, w) in &self.neighbors[node] {
                    *links.entry(community[other]).or_default() += w;
                }
                community_degree[current] -= k;
                let gain = |c: usize, w_in: f64| w_in - community_degree[c] * k / two_m;
                let stay = gain(current, links.get(&current).copied().unwrap_or(0.0));
                let mut best = current;
                let mut best_gain = stay;
                for (&c, &w_in) in &links {
                    let g = gain(c, w_in);
                    if g > best_gain {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != current && (best_gain - stay) / total_weight > MIN_MODULARITY_GAIN {
                    community[node] = best;
                    moved = true;
                } else {
                    best = current;
                }
                community_degree[best] += k;
            }
            if !moved {
                break;
            }
            moved_any = true;
        }
        moved_any
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Level {
        let mut self_loops = vec![0.0; count];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        for (node, adj) in self.neighbors.iter().enumerate() {
            let cu = community[node];
            self_loops[cu] += self.self_loops[node];
            for &(other, w) in adj {
                let cv = community[other];
                if cu == cv {
                    // each internal pair is seen from both ends
                    self_loops[cu] += w / 2.0;
                } else {
                    *links[cu].entry(cv).or_default() += w;
                }
            }
        }
        Level {
            neighbors: links.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
        }
    }
}

/// Renumbers labels to `0..k` in order of first appearance.
fn compact(labels: &mut [usize]) -> usize {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for label in labels.iter_mut() {
        *label = *map.entry(*label).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    next
}

/// Best modularity bisection of `members` on `level`: sign split of the
/// leading eigenvector of the community's modularity matrix, then greedy
/// single-node flips. Returns the side of each member and the gain in Q.
fn bisect(
    level: &Level,
    degree: &[f64],
    members: &[usize],
    total_weight: f64,
) -> Option<(Vec<bool>, f64)> {
    let n = members.len();
    let two_m = 2.0 * total_weight;
    let index: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut adj = vec![vec![0.0; n]; n];
    for (i, &m) in members.iter().enumerate() {
        for &(other, w) in &level.neighbors[m] {
            if let Some(&j) = index.get(&other) {
                adj[i][j] += w;
            }
        }
    }
    let k: Vec<f64> = members.iter().map(|&m| degree[m]).collect();
    let mut b: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| adj[i][j] - k[i] * k[j] / two_m).collect())
        .collect();
    for i in 0..n {
        let row: f64 = b[i].iter().sum();
        b[i][i] -= row;
    }
    let shift = b
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut x: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
    for _ in 0..1000 {
        let mut y: Vec<f64> = (0..n)
            .map(|i| b[i].iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + shift * x[i])
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        y.iter_mut().for_each(|v| *v /= norm);
        let delta: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = y;
        if delta < 1e-12 {
            break;
        }
    }
    let mut side: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();

    // split objective up to a positive factor: K_a K_b / 2m - w_ab
    let mut ka: f64 = (0..n).filter(|&i| side[i]).map(|i| k[i]).sum();
    let mut kb: f64 = k.iter().sum::<f64>() - ka;
    let mut cut = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if side[i] != side[j] {
                cut += adj[i][j];
            }
        }
    }
    let mut current = ka * kb / two_m - cut;
    for _ in 0..n * n {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let (same, other): (f64, f64) =
                (0..n).filter(|&j| j != i).fold((0.0, 0.0), |(s, o), j| {
                    if side[j] == side[i] {
                        (s + adj[i][j], o)
                    } else {
                        (s, o + adj[i][j])
                    }
                });
            let (na, nb) = if side[i] {
                (ka - k[i], kb + k[i])
            } else {
                (ka + k[i], kb - k[i])
            };
            let f = na * nb / two_m - (cut - other + same);
            if f > best.map_or(current, |(_, g)| g) {
                best = Some((i, f));
            }
        }
        match best {
            Some((i, f)) if (f - current) / total_weight > MIN_MODULARITY_GAIN => {
                if side[i] {
                    ka -= k[i];
                    kb += k[i];
                } else {
                    ka += k[i];
                    kb -= k[i];
                }
                cut = ka * kb / two_m - f;
                side[i] = !side[i];
                current = f;
            }
            _ => break,
        }
    }
    let gain = current / total_weight;
    let balanced = side.iter().any(|&s| s) && side.iter().any(|&s| !s);
    (balanced && gain > MIN_MODULARITY_GAIN).then_some((side, gain))
}

/// Modularity gained by keeping `a` and `b` apart rather than merged.
fn separation_gain(
    level: &Level,
    degree: &[f64],
    a: &[usize],
    b: &[usize],
    total_weight: f64,
) -> f64 {
    let in_b: BTreeSet<usize> = b.iter().copied().collect();
    let cut: f64 = a
        .iter()
        .flat_map(|&m| &level.neighbors[m])
        .filter(|(other, _)| in_b.contains(other))
        .map(|(_, w)| w)
        .sum();
    let ka: f64 = a.iter().map(|&m| degree[m]).sum();
    let kb: f64 = b.iter().map(|&m| degree[m]).sum();
    (ka * kb / (2.0 * total_weight) - cut) / total_weight
}

fn groups(membership: &[usize], count: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); count];
    for (node, &c) in membership.iter().enumerate() {
        groups[c].push(node);
    }
    groups
}

/// For every pair of adjacent communities, re-bisects their union and keeps
/// the new split when it beats the current one. Returns whether anything
/// changed.
fn rebalance_pairs(level: &Level, membership: &mut [usize], total_weight: f64) -> bool {
    let degree = level.degrees();
    let mut changed = false;
    let count = membership.iter().max().map_or(0, |&c| c + 1);
    for c1 in 0..count {
        for c2 in c1 + 1..count {
            let all = groups(membership, count);
            let (a, b) = (&all[c1], &all[c2]);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let adjacent = a
                .iter()
                .any(|&m| level.neighbors[m].iter().any(|(o, _)| membership[*o] == c2));
            if !adjacent {
                continue;
            }
            let current = separation_gain(level, &degree, a, b, total_weight);
            let union: Vec<usize> = a
                .iter()
                .chain(b)
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let (side, gain) = bisect(level, &degree, &union, total_weight)
                .unwrap_or_else(|| (vec![true; union.len()], 0.0));
            {
                if gain - current > MIN_MODULARITY_GAIN {
                    for (&m, &s) in union.iter().zip(&side) {
                        membership[m] = if s { c1 } else { c2 };
                    }
                    changed = true;
                }
            }
        }
    }
    changed
}

/// Splits every community of `membership` whose best bisection raises
/// modularity. Returns whether any community was split.
fn split_communities(level: &Level, membership: &mut [usize], total_weight: f64) -> bool {
    let degree = level.degrees();
    let count = membership.iter().max().map_or(0, |&c| c + 1);
    let mut next = count;
    let mut split_any = false;
    for c in 0..count {
        let members: Vec<usize> = (0..membership.len())
            .filter(|&i| membership[i] == c)
            .collect();
        if members.len() < 2 {
            continue;
        }
        if let Some((side, _)) = bisect(level, &degree, &members, total_weight) {
            for (&m, &s) in members.iter().zip(&side) {
                if !s {
                    membership[m] = next;
                }
            }
            next += 1;
            split_any = true;
        }
    }
    split_any
}

/// Result of a traced Louvain run: the final partition and the modularity
/// of the original graph after every phase that changed the partition.
#[derive(Debug, Clone)]
pub struct LouvainTrace {
    pub partition: Partition,
    pub phase_modularity: Vec<f64>,
}

/// Two-phase Louvain with ascending node visit order and a strict gain
/// threshold, so the result depends only on the graph. Once no phase moves
/// a node, communities whose bisection still raises modularity are split
/// and the phases resume.
pub fn louvain(wg: &WeightedGraph) -> Partition {
    louvain_traced(wg).partition
}

pub fn louvain_traced(wg: &WeightedGraph) -> LouvainTrace {
    let nodes: Vec<NodeId> = wg.nodes.iter().copied().collect();
    let slot: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut neighbors = vec![Vec::new(); nodes.len()];
    let mut total = 0.0;
    for (&(a, b), &w) in &wg.weights {
        neighbors[slot[&a]].push((slot[&b], w));
        neighbors[slot[&b]].push((slot[&a], w));
        total += w;
    }
    let base = Level {
        neighbors,
        self_loops: vec![0.0; nodes.len()],
    };

    let mut membership: Vec<usize> = (0..nodes.len()).collect();
    let to_assignment = |membership: &[usize]| -> BTreeMap<NodeId, usize> {
        nodes
            .iter()
            .zip(membership)
            .map(|(&n, &c)| (n, c))
            .collect()
    };
    let singleton_q = modularity(wg, &to_assignment(&membership)).unwrap_or(0.0);
    let mut phase_modularity = Vec::new();
    let mut previous = singleton_q;
    let mut record = |membership: &[usize]| {
        let q = modularity(wg, &to_assignment(membership)).unwrap_or(0.0);
        assert!(
            q >= previous - 1e-9,
            "modularity decreased across a Louvain phase: {previous} -> {q}"
        );
        previous = q;
        phase_modularity.push(q);
    };

    if total > 0.0 {
        loop {
            if base.local_moves(&mut membership, total) {
                record(&membership);
            }
            let count = compact(&mut membership);
            let mut level = base.aggregate(&membership, count);
            loop {
                let mut community: Vec<usize> = (0..level.len()).collect();
                if !level.local_moves(&mut community, total) {
                    break;
                }
                let count = compact(&mut community);
                for c in membership.iter_mut() {
                    *c = community[*c];
                }
                record(&membership);
                if count == level.len() {
                    break;
                }
                level = level.aggregate(&community, count);
            }
            let split = split_communities(&base, &mut membership, total);
            let rebalanced = rebalance_pairs(&base, &mut membership, total);
            if !split && !rebalanced {
                break;
            }
            record(&membership);
        }
    }

    compact(&mut membership);
    let assignment = to_assignment(&membership);
    let modularity = phase_modularity.last().copied().unwrap_or(singleton_q);
    LouvainTrace {
        partition: Partition {
            assignment,
            modularity,
        },
        phase_modularity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linking::Origin;

    fn graph(n: u64, edges: &[(u64, u64, f64)]) -> WeightedGraph {
        let mut wg = WeightedGraph::new((0..n).map(NodeId));
        for &(a, b, w) in edges {
            wg.set_weight(NodeId(a), NodeId(b), w).unwrap();
        }
        wg
    }

    fn assign(labels: &[usize]) -> BTreeMap<NodeId, usize> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &c)| (NodeId(i as u64), c))
            .collect()
    }

    fn qgraph(n: u64, edges: &[(u64, u64)]) -> QueryGraph {
        let seeds = (0..n)
            .map(|i| {
                (
                    NodeId(i),
                    Origin {
                        from_tags: true,
                        from_image: false,
                    },
                )
            })
            .collect();
        QueryGraph::from_parts(
            "q",
            seeds,
            BTreeSet::new(),
            edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))),
        )
        .unwrap()
    }

    #[test]
    fn relatedness_values() {
        let qg = qgraph(4, &[(0, 1), (1, 2)]);
        assert_eq!(relatedness(&qg, NodeId(0), NodeId(0)).unwrap(), 1.0);
        assert_eq!(relatedness(&qg, NodeId(0), NodeId(1)).unwrap(), 0.5);
        assert_eq!(relatedness(&qg, NodeId(0), NodeId(2)).unwrap(), 0.25);
        assert_eq!(relatedness(&qg, NodeId(0), NodeId(3)).unwrap(), 0.0);
        assert!(matches!(
            relatedness(&qg, NodeId(0), NodeId(9)),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn relatedness_horizon_is_four_hops() {
        let qg = qgraph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        assert_eq!(relatedness(&qg, NodeId(0), NodeId(4)).unwrap(), 0.0625);
        assert_eq!(relatedness(&qg, NodeId(0), NodeId(5)).unwrap(), 0.0);
    }

    #[test]
    fn relatedness_graph_of_triangle() {
        let wg = build_relatedness_graph(&qgraph(3, &[(0, 1), (1, 2), (0, 2)]));
        assert_eq!(wg.weights().len(), 3);
        assert!(wg.weights().values().all(|&w| w == 0.5));
        let empty = build_relatedness_graph(&qgraph(0, &[]));
        assert!(empty.is_empty() && empty.weights().is_empty());
    }

    #[test]
    fn modularity_hand_values() {
        let single = graph(2, &[(0, 1, 1.0)]);
        assert_eq!(modularity(&single, &assign(&[0, 0])).unwrap(), 0.0);
        assert_eq!(modularity(&single, &assign(&[0, 1])).unwrap(), -0.5);
        let two = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert_eq!(modularity(&two, &assign(&[0, 0, 1, 1])).unwrap(), 0.5);
        assert!(matches!(
            modularity(&two, &assign(&[0, 0, 1])),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn louvain_trivial_cases() {
        let empty = louvain(&WeightedGraph::default());
        assert!(empty.assignment.is_empty());
        assert_eq!(empty.modularity, 0.0);

        let one = louvain(&graph(1, &[]));
        assert_eq!(one.cluster_count(), 1);
        assert_eq!(one.modularity, 0.0);

        let isolated = louvain(&graph(3, &[]));
        assert_eq!(isolated.cluster_count(), 3);
    }

    #[test]
    fn louvain_two_edges() {
        let p = louvain(&graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]));
        assert_eq!(p.assignment, assign(&[0, 0, 1, 1]));
        assert!((p.modularity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn refinement_splits_greedy_merge_of_path() {
        // ascending moves alone end with every node in one cluster
        let wg = graph(4, &[(0, 1, 0.1887), (1, 3, 0.3032), (2, 3, 0.1927)]);
        let trace = louvain_traced(&wg);
        assert_eq!(trace.partition.assignment, assign(&[0, 0, 1, 1]));
        let q = modularity(&wg, &trace.partition.assignment).unwrap();
        assert!((trace.partition.modularity - q).abs() < 1e-12);
        assert!(trace.phase_modularity.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn louvain_isolated_node_is_singleton() {
        let p = louvain(&graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]));
        assert_eq!(p.cluster_of(NodeId(3)), Some(1));
        assert_eq!(p.members(0).count(), 3);
    }

    #[test]
    fn set_weight_validation() {
        let mut wg = graph(2, &[]);
        assert!(wg.set_weight(NodeId(0), NodeId(0), 1.0).is_err());
        assert!(wg.set_weight(NodeId(0), NodeId(5), 1.0).is_err());
        wg.set_weight(NodeId(1), NodeId(0), 0.3).unwrap();
        assert_eq!(wg.weight(NodeId(0), NodeId(1)), 0.3);
        wg.set_weight(NodeId(0), NodeId(1), 0.0).unwrap();
        assert!(wg.weights().is_empty());
    }
}
