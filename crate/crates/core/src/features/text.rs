//! Tokenization and TF-IDF over article abstracts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::kg::{KnowledgeGraph, NodeKind};

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Inverse document frequencies over all nonempty article abstracts:
/// `ln(N / (1 + df)) + 1`.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    documents: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let abstracts = graph
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::Article && !n.abstract_text.trim().is_empty())
            .map(|n| n.abstract_text.as_str());
        Self::from_documents(abstracts)
    }

    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = IdfTable::default();
        for doc in docs {
            let tokens = tokenize(doc);
            if tokens.is_empty() {
                continue;
            }
            table.documents += 1;
            for token in tokens.into_iter().collect::<BTreeSet<_>>() {
                *table.df.entry(token).or_default() += 1;
            }
        }
        table
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        (self.documents as f64 / (1 + df) as f64).ln() + 1.0
    }

    fn weights<'t>(&self, tokens: &'t [String]) -> BTreeMap<&'t str, f64> {
        let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_default() += 1.0;
        }
        for (t, w) in tf.iter_mut() {
            *w *= self.idf(t);
        }
        tf
    }

    /// Cosine between raw-count TF-IDF vectors; 0 when either side is empty
    /// or no abstracts were indexed.
    pub fn cosine(&self, doc: &[String], query: &[String]) -> f64 {
        if self.documents == 0 || doc.is_empty() || query.is_empty() {
            return 0.0;
        }
        let a = self.weights(doc);
        let b = self.weights(query);
        let dot: f64 = a
            .iter()
            .filter_map(|(t, wa)| b.get(t).map(|wb| wa * wb))
            .sum();
        let na: f64 = a.values().map(|w| w * w).sum::<f64>().sqrt();
        let nb: f64 = b.values().map(|w| w * w).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}
