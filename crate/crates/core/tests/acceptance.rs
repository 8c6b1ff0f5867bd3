//! Acceptance criteria 1–11, one report line per criterion.
//!
//! Runs without the libtest harness so every criterion is printed with its
//! measured evidence, whether it passes or not. Pass criterion numbers as
//! arguments to run a subset (`cargo test --test acceptance -- 5 9`).

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{synth, SynthSpec, DAY, T0};
use vinet::collection_graph::{build_all_criteria, penalty_factor, LinkageCriterion};
use vinet::graph::{Digraph, DirectedGraph};
use vinet::market::{DichotomyReport, RoleIndicators};
use vinet::metrics::powerlaw::DiscretePowerLaw;
use vinet::metrics::{
    fit_power_law, is_acyclic, louvain_communities, modularity, structural_summary, PowerLawOptions,
    StructuralStats,
};
use vinet::model::{cosine_similarity, TimeWindow};
use vinet::nft_graph::{build_nft_graph_with, BuildOptions};
use vinet::shap::{exact_shapley, shapley_estimate, toy, FnOracle, ShapleyConfig};
use vinet::tlcc::tlcc;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);
type Response = (&'static str, fn(f64) -> f64);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---- 1 ----------------------------------------------------------------------

/// Windowed, embedded asset ids and the edges the three rules admit, pair by pair.
fn brute_force(s: &common::Synth, window: &TimeWindow, threshold: f64) -> (BTreeSet<String>, BTreeMap<(String, String), f64>) {
    let mut edges = BTreeMap::new();
    let live: Vec<_> = s
        .records
        .iter()
        .filter(|r| window.contains(r.first_sale_ts))
        .filter_map(|r| s.vector(&r.asset_id).map(|v| (r, v)))
        .collect();
    for (ri, vi) in &live {
        for (rj, vj) in &live {
            if ri.first_sale_ts > rj.first_sale_ts && ri.collection_id != rj.collection_id {
                let c = cosine_similarity(vi, vj).unwrap();
                if c >= threshold {
                    edges.insert((ri.asset_id.clone(), rj.asset_id.clone()), c);
                }
            }
        }
    }
    (live.iter().map(|(r, _)| r.asset_id.clone()).collect(), edges)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut mismatches, mut edges, mut empty_windows) = (0usize, 0usize, 0usize);
    for trial in 0..50u64 {
        let spec = SynthSpec {
            n: rng.random_range(2..=200),
            dim: 16,
            collections: rng.random_range(1..=8),
            clusters: rng.random_range(1..=5),
            noise: rng.random_range(0.3..1.2),
            days: rng.random_range(1..=90),
            embedded: 0.9,
        };
        let s = synth(100 + trial, spec);
        let window = if trial % 3 == 0 {
            TimeWindow::unbounded()
        } else {
            let a = rng.random_range(0..30) * DAY;
            TimeWindow::new(T0 + a, T0 + a + rng.random_range(1..60) * DAY).unwrap()
        };
        let threshold = [0.5, 0.3, 0.75, 0.9, 1.0][trial as usize % 5];
        let opts = BuildOptions {
            threshold,
            workers: Some(1 + trial as usize % 4),
        };
        let (nodes, want) = brute_force(&s, &window, threshold);
        let g = match build_nft_graph_with(&s.catalog(), &s.store(), window, &opts) {
            Ok(g) => g,
            // an empty windowed node set is an error by contract
            Err(vinet::Error::EmptyGraph) if nodes.is_empty() => {
                empty_windows += 1;
                continue;
            }
            Err(e) => return Err(format!("trial {trial}: {e}")),
        };
        let got_nodes: BTreeSet<String> = g.nodes.iter().cloned().collect();
        mismatches += got_nodes.symmetric_difference(&nodes).count();
        let got: BTreeMap<(String, String), f64> = g
            .edges
            .iter()
            .map(|e| ((g.nodes[e.source].clone(), g.nodes[e.target].clone()), e.weight))
            .collect();
        edges += want.len();
        let keys_got: BTreeSet<_> = got.keys().collect();
        let keys_want: BTreeSet<_> = want.keys().collect();
        mismatches += keys_got.symmetric_difference(&keys_want).count();
        mismatches += want
            .iter()
            .filter(|(k, w)| got.get(*k).is_some_and(|g| g.to_bits() != w.to_bits()))
            .count();
    }
    let elapsed = start.elapsed();
    ensure!(mismatches == 0, "{mismatches} edge mismatches over 50 catalogs");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?} (limit 5 s)");
    Ok(format!(
        "50 catalogs, {edges} edges, 0 node/edge mismatches, weights bit-identical, \
         {empty_windows} empty windows rejected as required, {elapsed:.2?}"
    ))
}

// ---- 2 ----------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let s = synth(
        2,
        SynthSpec {
            n: 5_000,
            dim: 64,
            collections: 40,
            clusters: 12,
            noise: 0.7,
            days: 365,
            embedded: 1.0,
        },
    );
    let (cat, store) = (s.catalog(), s.store());
    let start = Instant::now();
    let g = build_nft_graph_with(
        &cat,
        &store,
        TimeWindow::unbounded(),
        &BuildOptions {
            threshold: 0.5,
            workers: Some(4),
        },
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "build took {elapsed:?} (limit 60 s)");
    ensure!(is_acyclic(&g), "topological sort failed");
    let mut pg = petgraph::graph::DiGraph::<(), ()>::new();
    let idx: Vec<_> = (0..g.node_count()).map(|_| pg.add_node(())).collect();
    for e in g.edges() {
        pg.add_edge(idx[e.source], idx[e.target], ());
    }
    let order = petgraph::algo::toposort(&pg, None).map_err(|_| "petgraph toposort found a cycle".to_string())?;
    let sccs = petgraph::algo::tarjan_scc(&pg).len();
    ensure!(order.len() == g.node_count(), "toposort covers {} of {} nodes", order.len(), g.node_count());
    ensure!(sccs == g.node_count(), "{sccs} SCCs for {} nodes", g.node_count());
    Ok(format!(
        "n=5000 d=64: {} edges in {elapsed:.2?} on 4 workers; toposort ok; #SCCs = #Nodes = {sccs}",
        g.edge_count()
    ))
}

// ---- 3 ----------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut violations, mut sizes) = (0usize, [0usize; 3]);
    for trial in 0..100u64 {
        let s = synth(
            300 + trial,
            SynthSpec {
                n: rng.random_range(20..=120),
                dim: 16,
                collections: rng.random_range(2..=10),
                clusters: rng.random_range(1..=4),
                noise: rng.random_range(0.3..1.0),
                days: rng.random_range(5..=60),
                embedded: 0.95,
            },
        );
        let threshold = rng.random_range(0.3..0.9);
        let opts = BuildOptions {
            threshold,
            workers: None,
        };
        let graphs = build_all_criteria(&s.catalog(), &s.store(), TimeWindow::unbounded(), &LinkageCriterion::ALL, &opts)
            .map_err(|e| e.to_string())?;
        let by: BTreeMap<LinkageCriterion, BTreeSet<(String, String)>> = graphs
            .iter()
            .map(|g| {
                let set = g
                    .edges
                    .iter()
                    .map(|e| (g.nodes[e.source].clone(), g.nodes[e.target].clone()))
                    .collect();
                (g.criterion, set)
            })
            .collect();
        let (min, avg, max) = (&by[&LinkageCriterion::Min], &by[&LinkageCriterion::Avg], &by[&LinkageCriterion::Max]);
        violations += min.difference(avg).count() + avg.difference(max).count();
        sizes[0] += min.len();
        sizes[1] += avg.len();
        sizes[2] += max.len();
    }
    ensure!(violations == 0, "{violations} containment violations");
    Ok(format!(
        "100 instances, 0 violations; total edges min/avg/max = {}/{}/{}",
        sizes[0], sizes[1], sizes[2]
    ))
}

// ---- 4 ----------------------------------------------------------------------

fn criterion_4() -> Outcome {
    for k in 1..=1000u64 {
        ensure!(penalty_factor(0, k) == 0.5, "penalty_factor(0,{k}) = {}", penalty_factor(0, k));
        let v = penalty_factor(k, k);
        ensure!((v - 0.7310586).abs() <= 1e-6, "penalty_factor({k},{k}) = {v}");
        ensure!(penalty_factor(k, 0) == 1.0, "penalty_factor({k},0) = {}", penalty_factor(k, 0));
    }
    Ok(format!(
        "k=1..1000: (0,k)=0.5 exactly, (k,k)={:.9}, (k,0)=1 exactly",
        penalty_factor(7, 7)
    ))
}

// ---- 5 ----------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let law = DiscretePowerLaw::new(2.5, 1);
    let opts = |seed| PowerLawOptions {
        bootstraps: 1000,
        seed,
        ..PowerLawOptions::default()
    };
    let (mut alpha_ok, mut p_ok) = (0, 0);
    let mut slowest = Duration::ZERO;
    let mut lines = Vec::new();
    for trial in 1..=20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let data: Vec<u64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
        let t = Instant::now();
        let fit = fit_power_law(&data, &opts(trial)).map_err(|e| e.to_string())?;
        let dt = t.elapsed();
        slowest = slowest.max(dt);
        alpha_ok += ((fit.alpha - 2.5).abs() <= 0.15) as usize;
        p_ok += (fit.p_value > 0.1) as usize;
        lines.push(format!("{:.3}/{:.3}", fit.alpha, fit.p_value));
    }
    let detail = format!(
        "alpha within 0.15: {alpha_ok}/20; p > 0.1: {p_ok}/20; slowest fit {slowest:.2?}; (alpha/p) {}",
        lines.join(" ")
    );
    ensure!(alpha_ok >= 18, "{detail}");
    ensure!(p_ok >= 18, "{detail}");
    ensure!(slowest < Duration::from_secs(30), "{detail}");
    Ok(detail)
}

// ---- 6 ----------------------------------------------------------------------

struct Expected {
    n: usize,
    m: usize,
    density: f64,
    avg_in: f64,
    assortativity: Option<f64>,
    sources: f64,
    sinks: f64,
    diameter: u64,
    apl: f64,
    transitivity: f64,
    cc: f64,
    cc_full: f64,
    scc: usize,
    wcc: usize,
    rec_edges: f64,
    rec_pairs: f64,
}

fn compare(name: &str, s: &StructuralStats, e: &Expected) -> Result<(), String> {
    let exact = |field: &str, got: f64, want: f64| -> Result<(), String> {
        ensure!(got == want, "{name}: {field} = {got}, expected {want}");
        Ok(())
    };
    let close = |field: &str, got: f64, want: f64| -> Result<(), String> {
        ensure!((got - want).abs() <= 1e-9, "{name}: {field} = {got}, expected {want}");
        Ok(())
    };
    ensure!(s.node_count == e.n && s.edge_count == e.m, "{name}: size");
    exact("density", s.density, e.density)?;
    exact("avg in-degree", s.avg_in_degree, e.avg_in)?;
    match (s.degree_assortativity, e.assortativity) {
        (None, None) => {}
        (Some(g), Some(w)) => close("assortativity", g, w)?,
        (g, w) => return Err(format!("{name}: assortativity {g:?}, expected {w:?}")),
    }
    exact("%sources", s.pct_sources, e.sources)?;
    exact("%sinks", s.pct_sinks, e.sinks)?;
    ensure!(s.diameter == e.diameter, "{name}: diameter {}", s.diameter);
    exact("APL", s.avg_path_length, e.apl)?;
    exact("transitivity", s.transitivity_undirected, e.transitivity)?;
    close("clustering", s.clustering_coeff_deg2plus, e.cc)?;
    close("clustering (full avg)", s.clustering_coeff_full_avg, e.cc_full)?;
    ensure!(s.scc_count == e.scc && s.wcc_count == e.wcc, "{name}: components {}/{}", s.scc_count, s.wcc_count);
    exact("%reciprocated edges", s.reciprocated_edge_pct, e.rec_edges)?;
    exact("%reciprocated pairs", s.reciprocated_pair_pct, e.rec_pairs)?;
    Ok(())
}

fn criterion_6() -> Outcome {
    let stats = |n, pairs: &[(usize, usize)]| structural_summary(&Digraph::from_pairs(n, pairs).unwrap()).unwrap();

    // 0 -> 1 -> 2
    compare(
        "3-path",
        &stats(3, &[(0, 1), (1, 2)]),
        &Expected {
            n: 3,
            m: 2,
            density: 2.0 / 6.0,
            avg_in: 2.0 / 3.0,
            assortativity: None,
            sources: 100.0 / 3.0,
            sinks: 100.0 / 3.0,
            diameter: 2,
            apl: 4.0 / 3.0,
            transitivity: 0.0,
            cc: 0.0,
            cc_full: 0.0,
            scc: 3,
            wcc: 1,
            rec_edges: 0.0,
            rec_pairs: 0.0,
        },
    )?;
    // four leaves inspired by a hub: i -> 0
    compare(
        "star",
        &stats(5, &[(1, 0), (2, 0), (3, 0), (4, 0)]),
        &Expected {
            n: 5,
            m: 4,
            density: 4.0 / 20.0,
            avg_in: 4.0 / 5.0,
            assortativity: None,
            sources: 80.0,
            sinks: 20.0,
            diameter: 1,
            apl: 1.0,
            transitivity: 0.0,
            cc: 0.0,
            cc_full: 0.0,
            scc: 5,
            wcc: 1,
            rec_edges: 0.0,
            rec_pairs: 0.0,
        },
    )?;
    // two fully reciprocal triangles {0,1,2}, {3,4,5} and a bridge 2 -> 3
    let mut pairs = Vec::new();
    for block in [[0, 1, 2], [3, 4, 5]] {
        for &u in &block {
            for &v in &block {
                if u != v {
                    pairs.push((u, v));
                }
            }
        }
    }
    pairs.push((2, 3));
    compare(
        "two-clique",
        &stats(6, &pairs),
        &Expected {
            n: 6,
            m: 13,
            density: 13.0 / 30.0,
            avg_in: 13.0 / 6.0,
            // edges with out(src)=3: {2->0, 2->1, 2->3}; in(tgt)=3: {4->3, 5->3, 2->3}
            assortativity: Some(2.0 / 15.0),
            sources: 0.0,
            sinks: 0.0,
            diameter: 3,
            apl: 33.0 / 21.0,
            transitivity: 6.0 / 10.0,
            cc: 7.0 / 9.0,
            cc_full: 7.0 / 9.0,
            scc: 2,
            wcc: 1,
            rec_edges: 1200.0 / 13.0,
            rec_pairs: 600.0 / 7.0,
        },
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.random_range(1..=40);
        let p = rng.random_range(0.0..0.3);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|(u, v)| u != v)
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        let s = stats(n, &pairs);
        ensure!(
            s.diameter as f64 >= s.avg_path_length,
            "diameter {} < APL {} on a random digraph",
            s.diameter,
            s.avg_path_length
        );
    }
    Ok("3-path, star and two-clique match hand-derived values; diameter >= APL on 1000 random digraphs".into())
}

// ---- 7 ----------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let mut pairs = Vec::new();
    for base in [0usize, 5] {
        for i in 0..5 {
            for j in i + 1..5 {
                pairs.push((base + i, base + j));
            }
        }
    }
    pairs.push((4, 5));
    let g = Digraph::from_pairs(10, &pairs).unwrap();
    let found = louvain_communities(&g, None);
    ensure!(found.community_count == 2, "{} communities", found.community_count);
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << 9) {
        // node 0 always in community 0; the other side must be nonempty
        let assignment: Vec<usize> = (0..10).map(|v| if v == 0 { 0 } else { (mask >> (v - 1) & 1) as usize }).collect();
        if assignment.iter().all(|&c| c == 0) {
            continue;
        }
        best = best.max(modularity(&g, &assignment));
    }
    let split = found.assignment == [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    ensure!(split, "partition {:?}", found.assignment);
    ensure!(
        (found.modularity - best).abs() <= 1e-9,
        "modularity {} vs brute-force best {}",
        found.modularity,
        best
    );
    Ok(format!("2 communities (the cliques); Q = {:.12} = brute-force optimum {:.12}", found.modularity, best))
}

// ---- 8 ----------------------------------------------------------------------

fn criterion_8() -> Outcome {
    const N: usize = 72;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // x[t] for t in -12..N, stored at index t + 12
    let x: Vec<f64> = (-12..N as i64)
        .map(|t| {
            let t = t as f64;
            0.05 * t + (2.0 * std::f64::consts::PI * t / 12.0).sin() + 0.2 * common::gaussian(&mut rng)
        })
        .collect();
    let s: Vec<Option<f64>> = (0..N).map(|t| Some(x[t + 12])).collect();
    let mut worst_r = f64::INFINITY;
    let mut worst_asym = 0.0f64;
    for k in 1..=12usize {
        // s' is s delayed by k buckets
        let s2: Vec<Option<f64>> = (0..N).map(|t| Some(x[t + 12 - k])).collect();
        let fwd = tlcc(&s, &s2, 12).map_err(|e| e.to_string())?;
        let back = tlcc(&s2, &s, 12).map_err(|e| e.to_string())?;
        ensure!(fwd.peak_lag == Some(-(k as i64)), "k={k}: peak lag {:?}", fwd.peak_lag);
        let r = fwd.peak_r.unwrap();
        ensure!(r >= 0.99, "k={k}: peak r {r}");
        worst_r = worst_r.min(r);
        for lag in -12..=12i64 {
            match (fwd.at(lag), back.at(-lag)) {
                (Some(a), Some(b)) => worst_asym = worst_asym.max((a - b).abs()),
                (None, None) => {}
                (a, b) => return Err(format!("k={k} lag={lag}: definedness differs ({a:?} vs {b:?})")),
            }
        }
    }
    ensure!(worst_asym <= 1e-12, "antisymmetry gap {worst_asym:e}");
    Ok(format!("k=1..12: peak at -k, min peak r {worst_r:.6}; max antisymmetry gap {worst_asym:e}"))
}

// ---- 9 ----------------------------------------------------------------------

/// Round-off allowance for the efficiency check: walks telescope exactly, so
/// both the residual and its standard error can be zero up to float error.
const EFFICIENCY_FLOOR: f64 = 1e-12;

type Game = Box<dyn Fn() -> toy::Toy>;

/// Dummy-carrying weights: a positive ramp over `n - 1` features, then 0.
fn ramp_with_dummy(n: usize) -> Vec<f64> {
    let mut w = toy::ramp_weights(n - 1);
    w.push(0.0);
    w
}

/// `g(Σ_{f∈S} w_f)` for a smooth response `g`.
fn smooth(w: Vec<f64>, g: fn(f64) -> f64) -> toy::Toy {
    FnOracle::new(Box::new(move |m: &[bool]| {
        g(w.iter().zip(m).filter(|(_, &b)| b).map(|(w, _)| w).sum())
    }))
}

/// Toy families: additive, weighted, quadratic, cubic, logistic and concave
/// responses (each with a dummy), a constant game (every feature a dummy) and
/// the 2-feature AND. All but AND respond smoothly to adding a feature, like
/// a similarity oracle does to unmasking a cell.
fn toy_games() -> Vec<(String, usize, Game, Vec<usize>)> {
    let mut games: Vec<(String, usize, Game, Vec<usize>)> = Vec::new();
    for n in [4usize, 8, 12] {
        let w = ramp_with_dummy(n);
        games.push(("additive".into(), n, Box::new(move || toy::additive(n)), vec![]));
        let w1 = w.clone();
        games.push(("weighted".into(), n, Box::new(move || toy::weighted(w1.clone())), vec![n - 1]));
        let w2 = w.clone();
        games.push(("quadratic".into(), n, Box::new(move || toy::quadratic(w2.clone())), vec![n - 1]));
        let responses: [Response; 3] = [
            ("cubic", |x| x.powi(3)),
            ("logistic", |x| 1.0 / (1.0 + (-8.0 * (x - 0.5)).exp())),
            ("sqrt", f64::sqrt),
        ];
        for (name, g) in responses {
            let w = w.clone();
            games.push((name.into(), n, Box::new(move || smooth(w.clone(), g)), vec![n - 1]));
        }
        games.push(("constant".into(), n, Box::new(|| toy::constant(0.7)), (0..n).collect()));
    }
    games.push(("and".into(), 2, Box::new(toy::and), vec![]));
    games
}

fn estimate(game: &Game, n: usize, seed: u64) -> Result<vinet::shap::ExplanationMap, String> {
    let cfg = ShapleyConfig {
        samples: 10_000,
        seed,
        ..ShapleyConfig::default()
    };
    shapley_estimate(&mut game(), n, &cfg).map_err(|e| e.to_string())
}

fn criterion_9() -> Outcome {
    let mut worst_err = 0.0f64;
    let mut worst_dummy = 0.0f64;
    let games = toy_games();
    for (name, n, make, dummies) in &games {
        let n = *n;
        let exact = exact_shapley(n, toy::value_fn(&mut make()));
        let seed = 9 + n as u64;
        let est = estimate(make, n, seed)?;
        let again = estimate(make, n, seed)?;
        let bits = |m: &vinet::shap::ExplanationMap| m.phi.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        ensure!(bits(&est) == bits(&again) && est == again, "{name} n={n}: rerun differs");
        let err = est.phi.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(err <= 0.02, "{name} n={n}: max |phi - exact| = {err}");
        ensure!(
            est.efficiency_residual.abs() <= 3.0 * est.efficiency_stderr + EFFICIENCY_FLOOR,
            "{name} n={n}: efficiency residual {} vs 3 x stderr {}",
            est.efficiency_residual,
            3.0 * est.efficiency_stderr
        );
        for &d in dummies {
            ensure!(est.phi[d].abs() <= 0.01, "{name} n={n}: dummy |phi[{d}]| = {}", est.phi[d].abs());
            worst_dummy = worst_dummy.max(est.phi[d].abs());
        }
        worst_err = worst_err.max(err);
    }
    Ok(format!(
        "{} games (additive, weighted, quadratic, cubic, logistic, sqrt, constant at |F| = 4/8/12; \
         AND at |F| = 2), K = 10000: \
         max err {worst_err:.4}, max dummy |phi| {worst_dummy:.1e}, efficiency within 3 stderr, reruns bit-identical",
        games.len()
    ))
}

/// Reports, without judging, how games with concentrated marginals fare at the
/// same budget: their per-feature standard error is near 0.01 at |F| = 12, so
/// a 0.02 bound on the maximum error is not expected to hold.
fn note_9() -> String {
    let mut parts = Vec::new();
    for n in [8usize, 12] {
        let w = ramp_with_dummy(n);
        let games: Vec<(&str, Game)> = vec![
            ("threshold", Box::new(move || toy::threshold(w.clone(), 0.5))),
            ("unanimity", Box::new(toy::and)),
        ];
        for (name, make) in games {
            let exact = exact_shapley(n, toy::value_fn(&mut make()));
            match estimate(&make, n, 9 + n as u64) {
                Ok(est) => {
                    let (err, z) = est
                        .phi
                        .iter()
                        .zip(&exact)
                        .zip(&est.stderr)
                        .map(|((a, b), se)| ((a - b).abs(), (a - b).abs() / se.max(f64::MIN_POSITIVE)))
                        .fold((0.0f64, 0.0f64), |acc, (e, z)| (acc.0.max(e), acc.1.max(z)));
                    let se = est.stderr.iter().copied().fold(0.0, f64::max);
                    parts.push(format!("{name} |F|={n}: max err {err:.4}, max stderr {se:.4}, max |err|/stderr {z:.2}"));
                }
                Err(e) => parts.push(format!("{name} |F|={n}: {e}")),
            }
        }
    }
    format!("high-variance games at K = 10000 (informational): {}", parts.join("; "))
}

// ---- 10 ---------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let inspiring = RoleIndicators {
        average_volume_usd: 231531.69,
        average_transactions: 151.92,
        average_price_usd: 692.91,
        maximum_price_usd: 6661.95,
        minimum_price_usd: 102.24,
        stdev_price_usd: 977.22,
    };
    let inspired = RoleIndicators {
        average_volume_usd: 146192.15,
        average_transactions: 100.00,
        average_price_usd: 899.09,
        maximum_price_usd: 4605.24,
        minimum_price_usd: 318.89,
        stdev_price_usd: 725.69,
    };
    let published = ["1.584", "1.519", "0.771", "1.447", "0.321", "1.347"];
    let report = DichotomyReport::from_aggregates(inspiring, inspired);
    let got: Vec<String> = report.ratios.iter().map(|r| format!("{r:.3}")).collect();
    ensure!(got == published, "ratios {got:?}, published {published:?}");
    Ok(format!("ratios {}", got.join(", ")))
}

// ---- 11 ---------------------------------------------------------------------

fn run_vinet(cwd: &Path, args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vinet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "`vinet {}` exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = std::fs::read(&p).unwrap();
            if p.to_string_lossy().ends_with(".manifest.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("created_at");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), bytes);
        }
    }
    out
}

fn criterion_11() -> Outcome {
    let inputs = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = synth(
        11,
        SynthSpec {
            n: 150,
            days: 200,
            ..SynthSpec::default()
        },
    );
    let files = s.write(inputs.path());
    let btc = inputs.path().join("btc.csv");
    common::write_btc_csv(&btc, 260, 11);
    let vinet = env!("CARGO_BIN_EXE_vinet").to_string();
    let base = files.flags();
    let with = |sub: &str, extra: &[&str]| -> Vec<String> {
        let mut v = vec![sub.to_string()];
        v.extend(base.iter().cloned());
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let plain = |args: &[&str]| -> Vec<String> { args.iter().map(|s| s.to_string()).collect() };
    let runs: Vec<Vec<String>> = vec![
        with("build-graph", &["-o", "out"]),
        with("build-graph", &["-o", "out_dot", "--format", "dot"]),
        with("build-collections", &["-o", "out"]),
        with("stats", &["-o", "out"]),
        with("stats", &["-o", "out_csv", "--format", "csv", "--level", "collection", "--criterion", "max"]),
        with("powerlaw", &["-o", "out", "--bootstraps", "200", "--seed", "7", "--min-tail", "5"]),
        with("communities", &["-o", "out", "--louvain-seed", "3"]),
        with("market", &["-o", "out"]),
        with("series", &["-o", "out", "--btc-csv", btc.to_str().unwrap(), "--sampling", "weekly"]),
        plain(&[
            "tlcc",
            "-o",
            "out",
            "--series-a",
            "out/series.btc-close.csv",
            "--series-b",
            "out/series.avg-mean-selling-price.csv",
        ]),
        plain(&["explain", "-o", "out", "--toy", "--width", "64", "--height", "64", "--cell", "16", "--seed", "5"]),
        {
            let mut v = plain(&["explain", "-o", "out_proc", "--samples", "3000", "--oracle-command", &vinet]);
            v.extend(plain(&["toy-oracle", "--width", "64", "--height", "64", "--cell", "16"]));
            v
        },
    ];
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    for args in &runs {
        run_vinet(a.path(), args)?;
        run_vinet(b.path(), args)?;
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    ensure!(sa.keys().eq(sb.keys()), "different artifact sets");
    let differing: Vec<_> = sa.iter().filter(|(k, v)| sb[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure!(differing.is_empty(), "artifacts differ between runs: {differing:?}");
    let subcommands: BTreeSet<&str> = runs.iter().map(|r| r[0].as_str()).collect();
    for sub in &subcommands {
        let found = sa.keys().any(|k| k.to_string_lossy().ends_with(&format!("{sub}.manifest.json")));
        ensure!(found, "no manifest for {sub}");
    }
    Ok(format!(
        "{} runs over {} subcommands, {} artifacts byte-identical on rerun",
        runs.len(),
        subcommands.len(),
        sa.len()
    ))
}

// ---- report -----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "brute-force graph equivalence", criterion_1),
        (2, "acyclicity at scale", criterion_2),
        (3, "linkage containment", criterion_3),
        (4, "penalty formula", criterion_4),
        (5, "power-law recovery", criterion_5),
        (6, "structural metrics oracle", criterion_6),
        (7, "Louvain two cliques", criterion_7),
        (8, "TLCC shifts and antisymmetry", criterion_8),
        (9, "Shapley vs brute force", criterion_9),
        (10, "market ratio arithmetic", criterion_10),
        (11, "CLI determinism", criterion_11),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS [{secs:7.2}s] {name}: {detail}"),
            Err(detail) => {
                println!("criterion {id:>2} FAIL [{secs:7.2}s] {name}: {detail}");
                failed.push(id);
            }
        }
        if id == 9 {
            println!("criterion  9 NOTE {}", note_9());
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
