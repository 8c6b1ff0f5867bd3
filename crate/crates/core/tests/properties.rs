//! Property-based invariants over randomly generated markets, series and games.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{synth, SynthSpec, DAY, T0};
use vinet::collection_graph::{build_all_criteria, LinkageCriterion};
use vinet::graph::{Digraph, DirectedGraph, Edge};
use vinet::metrics::{is_acyclic, louvain_communities, modularity};
use vinet::model::{cosine_similarity, TimeWindow};
use vinet::nft_graph::{build_nft_graph, BuildOptions, InspirationGraph};
use vinet::shap::{exact_shapley, shapley_estimate, FnOracle, ShapleyConfig};
use vinet::tlcc::{pearson, tlcc};
use vinet::Error;

fn small_market() -> impl Strategy<Value = (u64, SynthSpec)> {
    (any::<u64>(), 10usize..60, 2usize..6, 1usize..5, 0.2f64..1.2).prop_map(|(seed, n, collections, clusters, noise)| {
        (
            seed,
            SynthSpec {
                n,
                dim: 8,
                collections,
                clusters,
                noise,
                days: 30,
                embedded: 0.9,
            },
        )
    })
}

/// `None` when the window holds no embedded asset.
fn graph(seed: u64, spec: SynthSpec, window: TimeWindow, threshold: f64) -> Option<InspirationGraph> {
    let s = synth(seed, spec);
    match build_nft_graph(&s.catalog(), &s.store(), window, threshold) {
        Ok(g) => Some(g),
        Err(Error::EmptyGraph) => None,
        Err(e) => panic!("unexpected error {e}"),
    }
}

fn labelled_edges(g: &InspirationGraph) -> BTreeSet<(String, String)> {
    g.edges
        .iter()
        .map(|e| (g.nodes[e.source].clone(), g.nodes[e.target].clone()))
        .collect()
}

fn series(len: usize) -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.9, -100.0f64..100.0), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edges_follow_the_construction_rule((seed, spec) in small_market(), threshold in 0.0f64..0.95) {
        let s = synth(seed, spec);
        let catalog = s.catalog();
        let Some(g) = graph(seed, spec, TimeWindow::unbounded(), threshold) else { return Ok(()) };
        prop_assert!(is_acyclic(&g));
        for e in &g.edges {
            let (a, b) = (&g.nodes[e.source], &g.nodes[e.target]);
            let (ra, rb) = (catalog.get(a).unwrap(), catalog.get(b).unwrap());
            prop_assert!(ra.first_sale_ts > rb.first_sale_ts);
            prop_assert_ne!(&ra.collection_id, &rb.collection_id);
            let cos = cosine_similarity(s.vector(a).unwrap(), s.vector(b).unwrap()).unwrap();
            prop_assert!(e.weight >= threshold);
            prop_assert_eq!(e.weight.to_bits(), cos.to_bits());
        }
    }

    #[test]
    fn narrower_window_gives_subgraph(
        (seed, spec) in small_market(),
        a in 0i64..30, b in 0i64..30, c in 0i64..30, d in 0i64..30,
    ) {
        let mut days = [a, b, c, d];
        days.sort_unstable();
        prop_assume!(days[0] < days[1] && days[1] < days[2]);
        let outer = TimeWindow::new(T0 + days[0] * DAY, T0 + days[3] * DAY + DAY - 1).unwrap();
        let inner = TimeWindow::new(T0 + days[1] * DAY, T0 + days[2] * DAY).unwrap();
        let Some(small) = graph(seed, spec, inner, 0.5) else { return Ok(()) };
        let big = graph(seed, spec, outer, 0.5).expect("outer window contains the inner one");
        let big_nodes: BTreeSet<_> = big.nodes.iter().collect();
        prop_assert!(small.nodes.iter().all(|n| big_nodes.contains(n)));
        prop_assert!(labelled_edges(&small).is_subset(&labelled_edges(&big)));
    }

    #[test]
    fn higher_threshold_gives_subgraph((seed, spec) in small_market(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let Some(loose) = graph(seed, spec, TimeWindow::unbounded(), lo) else { return Ok(()) };
        let strict = graph(seed, spec, TimeWindow::unbounded(), hi).unwrap();
        prop_assert_eq!(&loose.nodes, &strict.nodes);
        prop_assert!(labelled_edges(&strict).is_subset(&labelled_edges(&loose)));
    }

    #[test]
    fn linkage_criteria_are_nested((seed, spec) in small_market(), threshold in 0.05f64..0.95) {
        let s = synth(seed, spec);
        let opts = BuildOptions { threshold, ..BuildOptions::default() };
        let graphs = match build_all_criteria(&s.catalog(), &s.store(), TimeWindow::unbounded(), &LinkageCriterion::ALL, &opts) {
            Ok(g) => g,
            Err(Error::EmptyGraph) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        // Collections span time, so unlike asset graphs these may contain cycles.
        let sets: Vec<BTreeSet<(usize, usize)>> = LinkageCriterion::ALL
            .iter()
            .map(|c| {
                let g = graphs.iter().find(|g| g.criterion == *c).unwrap();
                g.edges.iter().map(|e| (e.source, e.target)).collect()
            })
            .collect();
        let at = |c: LinkageCriterion| &sets[LinkageCriterion::ALL.iter().position(|x| *x == c).unwrap()];
        prop_assert!(at(LinkageCriterion::Min).is_subset(at(LinkageCriterion::Avg)));
        prop_assert!(at(LinkageCriterion::Avg).is_subset(at(LinkageCriterion::Max)));
    }

    #[test]
    fn tlcc_is_antisymmetric_in_lag(a in series(30), b in series(30), t in 1usize..8) {
        let (Ok(ab), Ok(ba)) = (tlcc(&a, &b, t), tlcc(&b, &a, t)) else { return Ok(()) };
        for lag in -(t as i64)..=(t as i64) {
            match (ab.at(lag), ba.at(-lag)) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9, "lag {lag}: {x} vs {y}"),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }

    #[test]
    fn tlcc_is_affine_invariant(
        a in series(24), b in series(24), scale in 0.1f64..50.0, negate in any::<bool>(), shift in -1e3f64..1e3,
    ) {
        let k = if negate { -scale } else { scale };
        let moved: Vec<Option<f64>> = a.iter().map(|v| v.map(|x| k * x + shift)).collect();
        let (Ok(r0), Ok(r1)) = (tlcc(&a, &b, 4), tlcc(&moved, &b, 4)) else { return Ok(()) };
        for (x, y) in r0.correlations.iter().zip(&r1.correlations) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x * k.signum() - y).abs() < 1e-6, "{x} vs {y}"),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }

    #[test]
    fn pearson_is_bounded(a in series(12), b in series(12)) {
        if let Ok(r) = pearson(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        v in prop::collection::vec(-10.0f32..10.0, 6),
        w in prop::collection::vec(-10.0f32..10.0, 6),
    ) {
        if let (Ok(x), Ok(y)) = (cosine_similarity(&v, &w), cosine_similarity(&w, &v)) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn shapley_matches_exact_on_quadratic_games(
        weights in prop::collection::vec(-0.04f64..0.04, 2..9),
        pairs in prop::collection::vec((0usize..8, 0usize..8, -0.02f64..0.02), 0..6),
        seed in any::<u64>(),
    ) {
        // Degree ≤ 2 games are recovered exactly by antithetic permutation
        // pairs; the 0.5 offset keeps every value inside [0, 1].
        let n = weights.len();
        let value = |m: &[bool]| {
            let linear: f64 = m.iter().zip(&weights).filter(|(b, _)| **b).map(|(_, w)| w).sum();
            let inter: f64 = pairs
                .iter()
                .filter(|(i, j, _)| *i < n && *j < n && i != j && m[*i] && m[*j])
                .map(|(_, _, c)| c)
                .sum();
            0.5 + linear + inter
        };
        let exact = exact_shapley(n, value);
        let cfg = ShapleyConfig { samples: 200, seed, ..ShapleyConfig::default() };
        let est = shapley_estimate(&mut FnOracle::new(value), n, &cfg).unwrap();
        for (e, x) in est.phi.iter().zip(&exact) {
            prop_assert!((e - x).abs() < 1e-9, "{:?} vs {:?}", est.phi, exact);
        }
        prop_assert!(est.efficiency_residual.abs() < 1e-9);
    }

    #[test]
    fn louvain_reports_consistent_modularity(
        n in 2usize..25,
        raw in prop::collection::vec((0usize..25, 0usize..25, 0.1f64..1.0), 1..80),
        seed in any::<u64>(),
    ) {
        let edges: Vec<Edge> = raw
            .into_iter()
            .filter(|(s, t, _)| s < &n && t < &n && s != t)
            .map(|(source, target, weight)| Edge { source, target, weight })
            .collect();
        let labels = (0..n).map(|i| format!("v{i}")).collect();
        let g = Digraph::new(labels, edges).unwrap();
        let part = louvain_communities(&g, Some(seed));
        prop_assert_eq!(part.assignment.len(), g.node_count());
        prop_assert!(part.assignment.iter().all(|&c| c < part.community_count));
        prop_assert!((part.modularity - modularity(&g, &part.assignment)).abs() < 1e-9);
        let singletons: Vec<usize> = (0..n).collect();
        prop_assert!(part.modularity >= modularity(&g, &singletons) - 1e-9);
    }
}
