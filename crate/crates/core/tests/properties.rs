use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use gistrank_core::cluster::{
    build_relatedness_graph, louvain, louvain_traced, modularity, relatedness,
};
use gistrank_core::eval::{evaluate, Mode};
use gistrank_core::features::{
    normalize_per_query, FeatureVector, BOOLEAN_FEATURES, FEATURE_COUNT,
};
use gistrank_core::kg::{load_graph, normalize_title, ConceptNode, KgEdge, KnowledgeGraph, NodeId};
use gistrank_core::linking::{corpus_link_stats, link_instance, Instance, LinkMode, SeedSet};
use gistrank_core::ltr::{mean_metric, rank, RankModel, Ranking, SampleVector, TrainConfig};
use gistrank_core::pipeline::split_ids;
use gistrank_core::query_graph::build_query_graph;
use gistrank_core::topics::{build_lexicon, GoldLabels};

fn title(i: usize) -> String {
    format!("concept {i}")
}

/// Node kinds and candidate edges, filtered down to a valid graph.
fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = KnowledgeGraph> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec((0..n, 0..n), 0..3 * n),
            )
        })
        .prop_map(|(is_category, pairs)| {
            let nodes: Vec<ConceptNode> = is_category
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    if c {
                        ConceptNode::category(i as u64, &title(i))
                    } else {
                        ConceptNode::article(i as u64, &title(i))
                    }
                })
                .collect();
            let edges: Vec<KgEdge> = pairs
                .into_iter()
                .filter(|&(a, b)| a != b && is_category[b])
                .map(|(a, b)| KgEdge::category_link(a as u64, b as u64))
                .collect();
            KnowledgeGraph::from_parts(nodes, edges).unwrap()
        })
}

fn mention_variant(i: usize, upper: bool, pad: usize) -> String {
    let base = title(i).replace(' ', &" ".repeat(pad + 1));
    let base = if upper { base.to_uppercase() } else { base };
    format!("{}{base}{}", " ".repeat(pad), "\t".repeat(pad))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_round_trips_through_files(g in graph_strategy(30)) {
        let dir = tempfile::tempdir().unwrap();
        let (np, ep) = (dir.path().join("n.tsv"), dir.path().join("e.tsv"));
        g.write_tsv(&np, &ep).unwrap();
        let back = load_graph(&np, &ep).unwrap();
        prop_assert_eq!(back.nodes(), g.nodes());
        prop_assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn adjacency_is_symmetric(g in graph_strategy(40)) {
        for node in g.nodes() {
            for &other in g.neighbors(node.id) {
                prop_assert!(g.neighbors(other).contains(&node.id));
            }
        }
    }

    #[test]
    fn lookup_ignores_case_and_spacing(g in graph_strategy(20), i in 0usize..20, upper: bool, pad in 0usize..3) {
        let raw = mention_variant(i, upper, pad);
        prop_assert_eq!(g.lookup_title(&raw), g.lookup_title(&normalize_title(&raw)));
        let expected = (i < g.len()).then_some(NodeId(i as u64));
        prop_assert_eq!(g.lookup_title(&raw), expected);
    }

    #[test]
    fn image_labels_only_add_seeds(
        g in graph_strategy(25),
        tags in prop::collection::vec(0usize..30, 0..6),
        labels in prop::collection::vec(0usize..30, 0..6),
    ) {
        let tags: Vec<String> = tags.into_iter().map(title).collect();
        let labels: Vec<String> = labels.into_iter().map(title).collect();
        let mut inst = Instance::new("x");
        inst.tags = tags;
        inst.image_labels = labels;
        let t = link_instance(&g, &inst, LinkMode::TagsOnly);
        let ti = link_instance(&g, &inst, LinkMode::TagsAndImage);
        prop_assert!(t.seeds.keys().all(|k| ti.seeds.contains_key(k)));
    }

    #[test]
    fn seeds_do_not_depend_on_tag_order(
        g in graph_strategy(25),
        tags in prop::collection::vec(0usize..30, 0..8),
        seed: u64,
    ) {
        let mut inst = Instance::new("x");
        inst.tags = tags.into_iter().map(title).collect();
        let before = link_instance(&g, &inst, LinkMode::TagsOnly);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(inst.tags.as_mut_slice(), &mut rng);
        prop_assert_eq!(link_instance(&g, &inst, LinkMode::TagsOnly), before);
    }

    #[test]
    fn report_totals_match_per_instance_seeds(
        g in graph_strategy(20),
        corpus in prop::collection::vec(prop::collection::vec(0usize..30, 0..5), 1..6),
    ) {
        let corpus: Vec<Instance> = corpus
            .into_iter()
            .enumerate()
            .map(|(i, tags)| {
                let mut inst = Instance::new(&format!("i{i}"));
                inst.tags = tags.into_iter().map(title).collect();
                inst
            })
            .collect();
        let report = corpus_link_stats(&g, &corpus);
        let linked: usize = corpus
            .iter()
            .map(|inst| inst.tags.iter().filter(|t| g.lookup_title(t).is_some()).count())
            .sum();
        prop_assert_eq!(report.total_seeds_tags, linked);
    }

    #[test]
    fn adding_a_seed_keeps_intermediates(
        g in graph_strategy(30),
        seeds in prop::collection::btree_set(0u64..30, 1..5),
        extra in 0u64..30,
    ) {
        let set = |ids: &BTreeSet<u64>| SeedSet {
            instance_id: "x".into(),
            seeds: ids
                .iter()
                .filter(|&&i| (i as usize) < g.len())
                .map(|&i| (NodeId(i), Default::default()))
                .collect(),
        };
        let small = build_query_graph(&g, &set(&seeds)).unwrap();
        let mut more = seeds.clone();
        more.insert(extra);
        let large = build_query_graph(&g, &set(&more)).unwrap();
        // a former intermediate may itself be the added seed
        prop_assert!(small
            .intermediates()
            .iter()
            .all(|n| large.intermediates().contains(n) || large.is_seed(*n)));
        prop_assert!(large.intermediates().iter().all(|&n| g.is_category(n)));
    }

    #[test]
    fn relatedness_is_symmetric_and_clustering_sound(
        g in graph_strategy(25),
        seeds in prop::collection::btree_set(0u64..25, 1..6),
    ) {
        let seedset = SeedSet {
            instance_id: "x".into(),
            seeds: seeds
                .iter()
                .filter(|&&i| (i as usize) < g.len())
                .map(|&i| (NodeId(i), Default::default()))
                .collect(),
        };
        let qg = build_query_graph(&g, &seedset).unwrap();
        for &a in qg.nodes() {
            for &b in qg.nodes() {
                prop_assert_eq!(relatedness(&qg, a, b).unwrap(), relatedness(&qg, b, a).unwrap());
            }
        }
        let wg = build_relatedness_graph(&qg);
        let trace = louvain_traced(&wg);
        let singletons: BTreeMap<NodeId, usize> = qg.nodes().iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let base = modularity(&wg, &singletons).unwrap();
        prop_assert!(trace.partition.modularity >= base - 1e-12);
        prop_assert!(trace.phase_modularity.windows(2).all(|p| p[1] >= p[0] - 1e-12));
        prop_assert_eq!(louvain(&wg), trace.partition);
    }

    #[test]
    fn normalization_is_idempotent(rows in prop::collection::vec(prop::collection::vec(0.0f64..100.0, FEATURE_COUNT), 1..8)) {
        let vectors: Vec<FeatureVector> = rows
            .into_iter()
            .map(|r| {
                let mut v: [f64; FEATURE_COUNT] = r.try_into().unwrap();
                for &b in &BOOLEAN_FEATURES {
                    v[b] = v[b].round().min(1.0);
                }
                FeatureVector(v)
            })
            .collect();
        let once = normalize_per_query(&vectors);
        let twice = normalize_per_query(&once);
        for (a, b) in once.iter().zip(&twice) {
            for d in 0..FEATURE_COUNT {
                prop_assert!((a.0[d] - b.0[d]).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&a.0[d]));
            }
        }
    }

    #[test]
    fn positive_scaling_keeps_rank_order(
        weights in prop::collection::vec(-1.0f64..1.0, 4),
        docs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..10),
        c in 0.01f64..100.0,
    ) {
        let model = |w: Vec<f64>| RankModel {
            feature_names: (0..4).map(|i| format!("f{i}")).collect(),
            weights: w,
            training_map: 0.0,
            config: TrainConfig::default(),
        };
        let candidates: Vec<(usize, SampleVector)> =
            docs.into_iter().enumerate().map(|(i, v)| (i, SampleVector::Dense(v))).collect();
        let a = rank(&model(weights.clone()), "q", &candidates).unwrap();
        let b = rank(&model(weights.iter().map(|w| w * c).collect()), "q", &candidates).unwrap();
        // exact score ties may reorder under rounding; compare on distinct scores
        let distinct = a.entries.windows(2).all(|p| (p[0].score - p[1].score).abs() > 1e-9);
        if distinct {
            prop_assert_eq!(a.doc_ids().collect::<Vec<_>>(), b.doc_ids().collect::<Vec<_>>());
        }
    }

    #[test]
    fn lexicon_is_bounded_and_grows(
        lists in prop::collection::vec(prop::collection::vec(0u64..40, 0..15), 1..8),
        top_k in 1usize..6,
    ) {
        let rankings: Vec<Ranking<NodeId>> = lists
            .iter()
            .enumerate()
            .map(|(q, ids)| {
                let unique: BTreeSet<u64> = ids.iter().copied().collect();
                let scored = unique.into_iter().map(|i| (NodeId(i), (i * 7 % 11) as f64)).collect();
                Ranking::from_scores(&format!("q{q}"), scored).unwrap()
            })
            .collect();
        let full = build_lexicon(&rankings, top_k);
        prop_assert!(full.len() <= top_k * rankings.len());
        let fewer = build_lexicon(&rankings[..rankings.len() - 1], top_k);
        prop_assert!(fewer.len() <= full.len());
    }

    #[test]
    fn overall_values_are_macro_means(
        topics in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..10), 1..5),
        k in 1usize..12,
    ) {
        let mut gold: GoldLabels = BTreeMap::new();
        let mut rankings = BTreeMap::new();
        for (t, rel) in topics.iter().enumerate() {
            let topic = format!("t{t}");
            let scored: Vec<(String, f64)> = rel
                .iter()
                .enumerate()
                .map(|(i, _)| (format!("img{i}"), -(i as f64)))
                .collect();
            for (i, &r) in rel.iter().enumerate() {
                let labels = gold.entry(format!("img{i}")).or_default();
                if r {
                    labels.insert(topic.clone());
                }
            }
            rankings.insert(topic.clone(), Ranking::from_scores(&topic, scored).unwrap());
        }
        let report = evaluate(&rankings, &gold, k, Mode::TII).unwrap();
        let aps: Vec<f64> = report.per_topic.values().map(|s| s.ap).collect();
        let ps: Vec<f64> = report.per_topic.values().map(|s| s.p_at_k).collect();
        prop_assert_eq!(report.overall_map, mean_metric(&aps).unwrap());
        prop_assert_eq!(report.overall_p_at_k, mean_metric(&ps).unwrap());
        prop_assert_eq!(evaluate(&rankings, &gold, k, Mode::TII).unwrap(), report);
    }

    #[test]
    fn split_is_a_pure_partition(n in 2usize..60, ratio in 0.05f64..0.95, seed: u64) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let s = split_ids(ids.iter().map(String::as_str), ratio, seed);
        prop_assert!(s.train.is_disjoint(&s.test));
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        prop_assert!(!s.train.is_empty() && !s.test.is_empty());
        prop_assert_eq!(split_ids(ids.iter().rev().map(String::as_str), ratio, seed), s);
    }
}
