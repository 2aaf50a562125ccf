//! Synthetic desk-scale fixture: a small category graph with one hub per
//! topic, and a tagged corpus whose topical concepts meet at those hubs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{ConceptNode, KgEdge, KnowledgeGraph, NodeId};
use crate::linking::{write_corpus, Instance};

pub const NODES_FILE: &str = "kg_nodes.tsv";
pub const EDGES_FILE: &str = "kg_edges.tsv";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CONFIG_FILE: &str = "pipeline.conf";

const TOPIC_NAMES: [&str; 10] = [
    "sky",
    "water",
    "people",
    "animals",
    "night",
    "food",
    "flowers",
    "vehicles",
    "architecture",
    "plants",
];
const FACETS: [&str; 4] = ["scenes", "objects", "places", "events"];
const ARTICLES_PER_FACET: usize = 12;
const VISUAL_PER_TOPIC: usize = 3;
const MISC_CATEGORIES: usize = 3;
const NOISE_PER_MISC: usize = 16;
const GENERIC_LABELS: [&str; 4] = ["outdoor", "indoor", "daylight", "closeup"];
const UNLINKABLE: [&str; 8] = [
    "nikon",
    "canon",
    "2008",
    "explore",
    "flickr",
    "d80",
    "bw",
    "geotagged",
];
const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ra", "te", "su", "vo", "ne", "di", "po", "an", "el", "bri", "tor", "sa",
    "qu", "zen", "mar", "li", "go",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub instances: usize,
    pub topics: usize,
}

struct TopicNodes {
    name: String,
    hub: u64,
    facets: Vec<u64>,
    /// Tag-side articles, grouped by facet.
    articles: Vec<Vec<(u64, String)>>,
    /// Image-label side articles: (id, title, alias).
    visual: Vec<(u64, String, String)>,
}

struct Builder {
    rng: ChaCha8Rng,
    next_id: u64,
    nodes: Vec<ConceptNode>,
    edges: Vec<KgEdge>,
    used_titles: BTreeSet<String>,
}

impl Builder {
    fn id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn category(&mut self, title: &str) -> u64 {
        let id = self.id();
        self.used_titles.insert(title.to_string());
        self.nodes.push(ConceptNode::category(id, title));
        id
    }

    fn word(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let w: String = (0..n)
                .map(|_| *SYLLABLES.choose(&mut self.rng).unwrap())
                .collect();
            let alias = format!("{w}s");
            if !self.used_titles.contains(&w) && !self.used_titles.contains(&alias) {
                self.used_titles.insert(w.clone());
                self.used_titles.insert(alias);
                return w;
            }
        }
    }

    fn article(&mut self, parent: u64, abstract_text: &str) -> (u64, String) {
        let id = self.id();
        let title = self.word();
        self.nodes.push(
            ConceptNode::article(id, &title).with_abstract(&format!("{title} {abstract_text}")),
        );
        self.edges.push(KgEdge::category_link(id, parent));
        (id, title)
    }
}

fn topic_name(t: usize) -> String {
    TOPIC_NAMES
        .get(t)
        .map_or_else(|| format!("topic{t}"), |s| s.to_string())
}

/// Writes the graph, corpus and a ready-to-run `pipeline.conf` into
/// `out_dir`. Output depends only on `spec`.
pub fn gen_fixture(spec: &FixtureSpec, out_dir: &Path) -> Result<()> {
    if spec.topics == 0 {
        return Err(Error::Config("fixture needs at least one topic".into()));
    }
    if spec.instances < 3 * spec.topics {
        return Err(Error::Config(format!(
            "fixture needs at least 3 instances per topic ({} for {} topics)",
            3 * spec.topics,
            spec.topics
        )));
    }
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        next_id: 0,
        nodes: Vec::new(),
        edges: Vec::new(),
        used_titles: BTreeSet::new(),
    };

    let root = b.category("topics (category)");
    let mut topics: Vec<TopicNodes> = Vec::new();
    for t in 0..spec.topics {
        let name = topic_name(t);
        let hub = b.category(&format!("{name} (category)"));
        b.edges.push(KgEdge::category_link(hub, root));
        let facets: Vec<u64> = FACETS
            .iter()
            .map(|f| {
                let id = b.category(&format!("{name} {f} (category)"));
                b.edges.push(KgEdge::category_link(id, hub));
                id
            })
            .collect();
        topics.push(TopicNodes {
            name,
            hub,
            facets,
            articles: Vec::new(),
            visual: Vec::new(),
        });
    }
    let misc: Vec<u64> = (0..MISC_CATEGORIES)
        .map(|m| b.category(&format!("miscellany {m} (category)")))
        .collect();
    let generic_cat = b.category("photography (category)");

    // Ids run from general to specific: categories, then the small visual
    // and generic vocabularies, then long-tail tag articles, then noise.
    for topic in topics.iter_mut() {
        for _ in 0..VISUAL_PER_TOPIC {
            let facet = topic.facets[b.rng.gen_range(0..FACETS.len())];
            let id = b.id();
            let title = b.word();
            let alias = format!("{title}s");
            b.nodes.push(
                ConceptNode::article(id, &title)
                    .with_redirects([alias.as_str()])
                    .with_abstract(&format!("{title} is a visible part of {}", topic.name)),
            );
            b.edges.push(KgEdge::category_link(id, facet));
            topic.visual.push((id, title, alias));
        }
    }
    let mut generic: Vec<(u64, String)> = Vec::new();
    for label in GENERIC_LABELS {
        let id = b.id();
        b.nodes
            .push(ConceptNode::article(id, label).with_abstract(&format!("{label} photography")));
        b.edges.push(KgEdge::category_link(id, generic_cat));
        generic.push((id, label.to_string()));
    }
    for topic in topics.iter_mut() {
        for (f, &facet) in topic.facets.iter().enumerate() {
            let text = format!("is one of the {} {}", topic.name, FACETS[f]);
            let arts = (0..ARTICLES_PER_FACET)
                .map(|_| b.article(facet, &text))
                .collect();
            topic.articles.push(arts);
        }
    }
    let mut noise: Vec<(u64, String)> = Vec::new();
    for &m in &misc {
        for _ in 0..NOISE_PER_MISC {
            noise.push(b.article(m, "is a miscellaneous concept"));
        }
    }
    let graph = KnowledgeGraph::from_parts(b.nodes.clone(), b.edges.clone())?;

    let mut assignment: Vec<usize> = (0..spec.instances).map(|i| i % spec.topics).collect();
    assignment.shuffle(&mut b.rng);
    let rng = &mut b.rng;
    let mut corpus = Vec::with_capacity(spec.instances);
    for (i, &t) in assignment.iter().enumerate() {
        let topic = &topics[t];
        let mut grades: BTreeMap<NodeId, u8> = BTreeMap::new();
        grades.insert(NodeId(topic.hub), 5);
        for &f in &topic.facets {
            grades.insert(NodeId(f), 5);
        }
        let mut tags: Vec<String> = Vec::new();
        let mut facet_order: Vec<usize> = (0..FACETS.len()).collect();
        facet_order.shuffle(rng);
        let n_topical = rng.gen_range(5..=6);
        let mut chosen: BTreeSet<u64> = BTreeSet::new();
        for k in 0..n_topical {
            // The first two tags come from different facets so the hub lies
            // on a shortest path between them.
            let facet = if k < 2 {
                facet_order[k]
            } else {
                rng.gen_range(0..FACETS.len())
            };
            let (id, title) = topic.articles[facet].choose(rng).unwrap();
            if chosen.insert(*id) {
                tags.push(title.clone());
                grades.insert(NodeId(*id), 5);
            }
        }
        for _ in 0..rng.gen_range(3..=4) {
            let (id, title) = noise.choose(rng).unwrap();
            if chosen.insert(*id) {
                tags.push(title.clone());
                grades.insert(NodeId(*id), 1);
            }
        }
        for _ in 0..rng.gen_range(1..=2) {
            tags.push(UNLINKABLE.choose(rng).unwrap().to_string());
        }
        tags.shuffle(rng);

        let mut labels: Vec<String> = Vec::new();
        if rng.gen_bool(0.85) {
            let count = rng.gen_range(1..=2);
            let picks: Vec<_> = topic.visual.choose_multiple(rng, count).collect();
            for (id, title, alias) in picks {
                labels.push(if rng.gen_bool(0.5) {
                    alias.clone()
                } else {
                    title.clone()
                });
                grades.insert(NodeId(*id), 5);
            }
        }
        if rng.gen_bool(0.5) {
            let (id, label) = generic.choose(rng).unwrap();
            labels.push(label.clone());
            grades.insert(NodeId(*id), 1);
        }

        corpus.push(Instance {
            id: format!("img{:04}", i + 1),
            tags,
            image_labels: labels,
            topic_labels: BTreeSet::from([topic.name.clone()]),
            concept_grades: Some(grades),
        });
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    graph.write_tsv(&out_dir.join(NODES_FILE), &out_dir.join(EDGES_FILE))?;
    write_corpus(&out_dir.join(CORPUS_FILE), &corpus)?;
    let config = format!(
        "# generated fixture: seed {seed}, {n} instances, {m} topics\n\
         kg.nodes={NODES_FILE}\n\
         kg.edges={EDGES_FILE}\n\
         corpus.path={CORPUS_FILE}\n\
         out.dir=out\n\
         modes=T,TI,TII\n\
         top_k=10\n\
         eval.k=50\n\
         split.ratio=0.6\n\
         split.seed={seed}\n\
         train1.seed={seed}\n\
         train2.seed={seed}\n",
        seed = spec.seed,
        n = spec.instances,
        m = spec.topics,
    );
    let path = out_dir.join(CONFIG_FILE);
    fs::write(&path, config).map_err(|e| Error::io(path, e))
}
