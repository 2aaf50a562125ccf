//! Graph centrality measures over the undirected, unweighted query graph.

use std::collections::{BTreeMap, VecDeque};

use crate::kg::NodeId;
use crate::query_graph::QueryGraph;

/// Shortest-path betweenness (Brandes), normalized by `(n-1)(n-2)/2` so a
/// node interior to every pair's only shortest path scores 1.
pub fn betweenness(qg: &QueryGraph) -> BTreeMap<NodeId, f64> {
    let scores = betweenness_slots(qg.adjacency());
    qg.nodes().iter().copied().zip(scores).collect()
}

pub(crate) fn betweenness_slots(adjacency: &[Vec<usize>]) -> Vec<f64> {
    let n = adjacency.len();
    let mut centrality = vec![0.0; n];
    let mut stack = Vec::with_capacity(n);
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);

    for source in 0..n {
        stack.clear();
        for p in predecessors.iter_mut() {
            p.clear();
        }
        sigma.fill(0.0);
        dist.fill(-1);
        delta.fill(0.0);
        sigma[source] = 1.0;
        dist[source] = 0;
        queue.push_back(source);

        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adjacency[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    predecessors[w].push(v);
                }
            }
        }

        while let Some(w) = stack.pop() {
            for &v in &predecessors[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != source {
                centrality[w] += delta[w];
            }
        }
    }

    if n < 3 {
        return vec![0.0; n];
    }
    // every unordered pair was counted from both endpoints
    let scale = 1.0 / ((n - 1) as f64 * (n - 2) as f64);
    centrality.iter().map(|c| c * scale).collect()
}

/// PageRank by power iteration with uniform teleport; dangling mass is
/// spread uniformly. Iterates until the largest per-node change is below `tol`.
pub fn pagerank(qg: &QueryGraph, damping: f64, tol: f64) -> BTreeMap<NodeId, f64> {
    let scores = pagerank_slots(qg.adjacency(), damping, tol);
    qg.nodes().iter().copied().zip(scores).collect()
}

const PAGERANK_MAX_ITERATIONS: usize = 10_000;

pub(crate) fn pagerank_slots(adjacency: &[Vec<usize>], damping: f64, tol: f64) -> Vec<f64> {
    assert!(damping > 0.0 && damping < 1.0, "damping must lie in (0, 1)");
    let n = adjacency.len();
    if n == 0 {
        return Vec::new();
    }
    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut next = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITERATIONS {
        let dangling: f64 = adjacency
            .iter()
            .zip(&rank)
            .filter(|(adj, _)| adj.is_empty())
            .map(|(_, r)| r)
            .sum();
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        next.fill(base);
        for (u, adj) in adjacency.iter().enumerate() {
            if adj.is_empty() {
                continue;
            }
            let share = damping * rank[u] / adj.len() as f64;
            for &v in adj {
                next[v] += share;
            }
        }
        let change = rank
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut rank, &mut next);
        if change < tol {
            break;
        }
    }
    rank
}

/// Closeness with Wasserman-Faust scaling for disconnected graphs:
/// `(r / (n-1)) * (r / sum_d)` over the `r` reachable nodes. Equals
/// `(n-1) / sum_d` on connected graphs; 0 for isolated nodes.
pub(crate) fn closeness_slot(qg: &QueryGraph, slot: usize) -> f64 {
    let n = qg.len();
    if n < 2 {
        return 0.0;
    }
    let (reachable, total) = qg
        .distance_row(slot)
        .iter()
        .enumerate()
        .filter(|&(other, _)| other != slot)
        .filter_map(|(_, d)| *d)
        .fold((0usize, 0u64), |(r, t), d| (r + 1, t + u64::from(d)));
    if total == 0 {
        return 0.0;
    }
    let r = reachable as f64;
    (r / (n - 1) as f64) * (r / total as f64)
}
