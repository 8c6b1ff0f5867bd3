//! Structural statistics of a directed graph.
//!
//! Triadic statistics (transitivity, clustering) are taken on the undirected
//! simple projection. Path statistics use hop distances over reachable
//! ordered pairs only.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use petgraph::graph::DiGraph;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssortativityFlavor {
    /// Source out-degree against target in-degree.
    #[default]
    OutIn,
    InIn,
    OutOut,
    InOut,
}

impl fmt::Display for AssortativityFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssortativityFlavor::OutIn => "out-in",
            AssortativityFlavor::InIn => "in-in",
            AssortativityFlavor::OutOut => "out-out",
            AssortativityFlavor::InOut => "in-out",
        })
    }
}

impl FromStr for AssortativityFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "out-in" => Ok(AssortativityFlavor::OutIn),
            "in-in" => Ok(AssortativityFlavor::InIn),
            "out-out" => Ok(AssortativityFlavor::OutOut),
            "in-out" => Ok(AssortativityFlavor::InOut),
            other => Err(Error::Config(format!("unknown assortativity flavor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    #[default]
    Directed,
    Undirected,
}

impl FromStr for PathMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "directed" => Ok(PathMode::Directed),
            "undirected" => Ok(PathMode::Undirected),
            other => Err(Error::Config(format!("unknown path mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub assortativity: AssortativityFlavor,
    pub paths: PathMode,
    /// Exact all-sources BFS up to this many nodes; above it, pivots are sampled.
    pub exact_path_limit: usize,
    pub path_pivots: usize,
    pub seed: u64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            assortativity: AssortativityFlavor::OutIn,
            paths: PathMode::Directed,
            exact_path_limit: 50_000,
            path_pivots: 2_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralStats {
    #[serde(rename = "#Nodes")]
    pub node_count: usize,
    #[serde(rename = "#Edges")]
    pub edge_count: usize,
    #[serde(rename = "Density")]
    pub density: f64,
    #[serde(rename = "Avg. In-Degree")]
    pub avg_in_degree: f64,
    /// `None` when either degree sequence over the edges has zero variance.
    #[serde(rename = "Degree Assortativity")]
    pub degree_assortativity: Option<f64>,
    #[serde(rename = "%Sources")]
    pub pct_sources: f64,
    #[serde(rename = "%Sinks")]
    pub pct_sinks: f64,
    #[serde(rename = "Diameter")]
    pub diameter: u64,
    #[serde(rename = "Avg. Path Length")]
    pub avg_path_length: f64,
    #[serde(rename = "Transitivity*")]
    pub transitivity_undirected: f64,
    #[serde(rename = "Clust. Coeff. *")]
    pub clustering_coeff_deg2plus: f64,
    #[serde(rename = "Clust. Coeff. (full avg)*")]
    pub clustering_coeff_full_avg: f64,
    #[serde(rename = "#SCCs")]
    pub scc_count: usize,
    #[serde(rename = "#WCCs")]
    pub wcc_count: usize,
    #[serde(rename = "%Reciprocated Edges")]
    pub reciprocated_edge_pct: f64,
    #[serde(rename = "%Reciprocated Pairs")]
    pub reciprocated_pair_pct: f64,
    pub assortativity_flavor: AssortativityFlavor,
    pub path_mode: PathMode,
    /// Number of BFS sources used for diameter / path length; equals the node count when exact.
    pub path_sources: usize,
}

/// Compressed adjacency.
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    fn new(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for (u, _) in pairs.clone() {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        for (u, v) in pairs {
            targets[fill[u]] = v;
            fill[u] += 1;
        }
        Csr { offsets, targets }
    }

    fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }
}

/// Sorted, deduplicated undirected neighbor lists without self-loops.
pub(crate) fn undirected_neighbors<G: DirectedGraph + ?Sized>(g: &G) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); g.node_count()];
    for e in g.edges() {
        if e.source != e.target {
            adj[e.source].push(e.target);
            adj[e.target].push(e.source);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn pearson_pairs(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn degree_assortativity<G: DirectedGraph + ?Sized>(
    g: &G,
    flavor: AssortativityFlavor,
) -> Option<f64> {
    let (ind, outd) = (g.in_degrees(), g.out_degrees());
    let pick = |out: bool, node: usize| if out { outd[node] } else { ind[node] } as f64;
    let (src_out, tgt_out) = match flavor {
        AssortativityFlavor::OutIn => (true, false),
        AssortativityFlavor::InIn => (false, false),
        AssortativityFlavor::OutOut => (true, true),
        AssortativityFlavor::InOut => (false, true),
    };
    let xs: Vec<f64> = g.edges().iter().map(|e| pick(src_out, e.source)).collect();
    let ys: Vec<f64> = g.edges().iter().map(|e| pick(tgt_out, e.target)).collect();
    pearson_pairs(&xs, &ys)
}

/// `(ordered-edge %, unordered-pair %)` of reciprocated links, self-loops ignored.
pub fn reciprocity<G: DirectedGraph + ?Sized>(g: &G) -> (f64, f64) {
    let set: HashSet<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|e| e.source != e.target)
        .map(|e| (e.source, e.target))
        .collect();
    if set.is_empty() {
        return (0.0, 0.0);
    }
    let mutual_edges = set.iter().filter(|(u, v)| set.contains(&(*v, *u))).count();
    let pairs: HashSet<(usize, usize)> = set.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    (
        100.0 * mutual_edges as f64 / set.len() as f64,
        100.0 * (mutual_edges / 2) as f64 / pairs.len() as f64,
    )
}

/// Triangles through each node.
fn local_triangles(adj: &[Vec<usize>]) -> Vec<u64> {
    adj.par_iter()
        .enumerate()
        .map(|(u, nbrs)| {
            let mut t = 0u64;
            for (a, &v) in nbrs.iter().enumerate() {
                for &w in &nbrs[a + 1..] {
                    if v != u && w != u && adj[v].binary_search(&w).is_ok() {
                        t += 1;
                    }
                }
            }
            t
        })
        .collect()
}

fn bfs_from(csr: &Csr, src: usize, dist: &mut [u32], queue: &mut Vec<usize>) -> (u64, u64, u64) {
    dist.fill(u32::MAX);
    queue.clear();
    dist[src] = 0;
    queue.push(src);
    let (mut head, mut max_d, mut sum, mut reached) = (0usize, 0u64, 0u64, 0u64);
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        let du = dist[u];
        for &v in csr.neighbors(u) {
            if dist[v] == u32::MAX {
                dist[v] = du + 1;
                queue.push(v);
                let d = (du + 1) as u64;
                max_d = max_d.max(d);
                sum += d;
                reached += 1;
            }
        }
    }
    (max_d, sum, reached)
}

/// `(diameter, average path length, sources used)`.
fn path_stats<G: DirectedGraph + ?Sized>(g: &G, opts: &StatsOptions) -> (u64, f64, usize) {
    let n = g.node_count();
    let pairs: Vec<(usize, usize)> = match opts.paths {
        PathMode::Directed => g.edges().iter().map(|e| (e.source, e.target)).collect(),
        PathMode::Undirected => g
            .edges()
            .iter()
            .flat_map(|e| [(e.source, e.target), (e.target, e.source)])
            .collect(),
    };
    let csr = Csr::new(n, pairs.iter().copied());
    let sources: Vec<usize> = if n <= opts.exact_path_limit {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut s = sample(&mut rng, n, opts.path_pivots.min(n)).into_vec();
        s.sort_unstable();
        s
    };
    let (max_d, sum, reached) = sources
        .par_iter()
        .map_init(
            || (vec![u32::MAX; n], Vec::with_capacity(n)),
            |(dist, queue), &s| bfs_from(&csr, s, dist, queue),
        )
        .reduce(|| (0, 0, 0), |a, b| (a.0.max(b.0), a.1 + b.1, a.2 + b.2));
    let apl = if reached == 0 {
        0.0
    } else {
        sum as f64 / reached as f64
    };
    (max_d, apl, sources.len())
}

fn component_counts<G: DirectedGraph + ?Sized>(g: &G) -> (usize, usize) {
    let mut pg: DiGraph<(), ()> = DiGraph::with_capacity(g.node_count(), g.edge_count());
    let idx: Vec<_> = (0..g.node_count()).map(|_| pg.add_node(())).collect();
    for e in g.edges() {
        pg.add_edge(idx[e.source], idx[e.target], ());
    }
    let scc = petgraph::algo::tarjan_scc(&pg).len();
    let wcc = petgraph::algo::connected_components(&pg);
    (scc, wcc)
}

/// Whether a topological order exists.
pub fn is_acyclic<G: DirectedGraph + ?Sized>(g: &G) -> bool {
    let mut pg: DiGraph<(), ()> = DiGraph::with_capacity(g.node_count(), g.edge_count());
    let idx: Vec<_> = (0..g.node_count()).map(|_| pg.add_node(())).collect();
    for e in g.edges() {
        pg.add_edge(idx[e.source], idx[e.target], ());
    }
    petgraph::algo::toposort(&pg, None).is_ok()
}

pub fn structural_summary<G: DirectedGraph + ?Sized>(g: &G) -> Result<StructuralStats> {
    structural_summary_with(g, &StatsOptions::default())
}

pub fn structural_summary_with<G: DirectedGraph + ?Sized>(
    g: &G,
    opts: &StatsOptions,
) -> Result<StructuralStats> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let m = g.edge_count();
    let (ind, outd) = (g.in_degrees(), g.out_degrees());
    let pct = |count: usize| 100.0 * count as f64 / n as f64;

    let adj = undirected_neighbors(g);
    let tri = local_triangles(&adj);
    let (mut closed, mut triples) = (0u64, 0u64);
    let (mut cc_sum, mut cc_nodes) = (0.0f64, 0usize);
    for (v, nbrs) in adj.iter().enumerate() {
        let k = nbrs.len() as u64;
        if k >= 2 {
            let possible = k * (k - 1) / 2;
            triples += possible;
            closed += tri[v];
            cc_sum += tri[v] as f64 / possible as f64;
            cc_nodes += 1;
        }
    }
    let (diameter, avg_path_length, path_sources) = path_stats(g, opts);
    let (scc_count, wcc_count) = component_counts(g);
    let (reciprocated_edge_pct, reciprocated_pair_pct) = reciprocity(g);

    Ok(StructuralStats {
        node_count: n,
        edge_count: m,
        density: if n > 1 {
            m as f64 / (n as f64 * (n as f64 - 1.0))
        } else {
            0.0
        },
        avg_in_degree: m as f64 / n as f64,
        degree_assortativity: degree_assortativity(g, opts.assortativity),
        pct_sources: pct(ind.iter().filter(|&&d| d == 0).count()),
        pct_sinks: pct(outd.iter().filter(|&&d| d == 0).count()),
        diameter,
        avg_path_length,
        transitivity_undirected: if triples == 0 {
            0.0
        } else {
            closed as f64 / triples as f64
        },
        clustering_coeff_deg2plus: if cc_nodes == 0 {
            0.0
        } else {
            cc_sum / cc_nodes as f64
        },
        clustering_coeff_full_avg: cc_sum / n as f64,
        scc_count,
        wcc_count,
        reciprocated_edge_pct,
        reciprocated_pair_pct,
        assortativity_flavor: opts.assortativity,
        path_mode: opts.paths,
        path_sources,
    })
}
