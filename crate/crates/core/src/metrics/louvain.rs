//! Louvain modularity optimisation on the undirected weighted projection.
//!
//! Antiparallel edges are merged by summing their weights and self-loops of
//! the input are dropped. Nodes are visited in ascending index order unless a
//! seed asks for a shuffled order; gain ties go to the lowest community id.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::DirectedGraph;

const MIN_GAIN: f64 = 1e-12;
const MAX_PASSES: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Community id per node; ids are numbered by first appearance in node order.
    pub assignment: Vec<usize>,
    pub community_count: usize,
    pub modularity: f64,
}

/// Weighted undirected adjacency; `adj[u]` holds `(v, w)` with `v != u`, plus
/// separate self-loop weights produced by aggregation.
#[derive(Debug, Clone)]
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn from_graph<G: DirectedGraph + ?Sized>(g: &G) -> Self {
        let n = g.node_count();
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for e in g.edges() {
            if e.source == e.target {
                continue;
            }
            *maps[e.source].entry(e.target).or_insert(0.0) += e.weight;
            *maps[e.target].entry(e.source).or_insert(0.0) += e.weight;
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops: vec![0.0; n],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Weighted degree, counting a self-loop twice.
    fn strength(&self, u: usize) -> f64 {
        self.adj[u].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[u]
    }

    fn total_weight(&self) -> f64 {
        // each undirected edge appears twice in adj
        (0..self.len()).map(|u| self.strength(u)).sum::<f64>() / 2.0
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Level {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        let mut self_loops = vec![0.0; count];
        for u in 0..self.len() {
            let cu = community[u];
            self_loops[cu] += self.self_loops[u];
            for &(v, w) in &self.adj[u] {
                let cv = community[v];
                if cu == cv {
                    // visited from both endpoints
                    self_loops[cu] += w / 2.0;
                } else {
                    *maps[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
        }
    }
}

fn renumber(labels: &mut [usize]) -> usize {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for l in labels.iter_mut() {
        *l = *map.entry(*l).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    next
}

/// One local-moving phase; returns whether any node changed community.
fn local_moves(level: &Level, community: &mut [usize], order: &[usize], m2: f64) -> bool {
    let n = level.len();
    let strength: Vec<f64> = (0..n).map(|u| level.strength(u)).collect();
    let mut tot = vec![0.0f64; n];
    for u in 0..n {
        tot[community[u]] += strength[u];
    }
    let mut links = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    for _pass in 0..MAX_PASSES {
        let mut moved = false;
        for &u in order {
            let cu = community[u];
            let ku = strength[u];
            for &(v, w) in &level.adj[u] {
                let cv = community[v];
                if links[cv] == 0.0 {
                    touched.push(cv);
                }
                links[cv] += w;
            }
            tot[cu] -= ku;
            let gain = |c: usize, l: f64| l - tot[c] * ku / m2;
            let mut best = cu;
            let mut best_gain = gain(cu, links[cu]);
            touched.sort_unstable();
            for &c in &touched {
                let g = gain(c, links[c]);
                if g > best_gain + MIN_GAIN || (c < best && (g - best_gain).abs() <= MIN_GAIN) {
                    best = c;
                    best_gain = g;
                }
            }
            // Only leave the current community for a strict improvement.
            if best != cu && gain(best, links[best]) <= gain(cu, links[cu]) + MIN_GAIN {
                best = cu;
            }
            tot[best] += ku;
            if best != cu {
                community[u] = best;
                moved = true;
                moved_any = true;
            }
            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    moved_any
}

/// Newman modularity of `assignment` on the undirected weighted projection of `g`.
pub fn modularity<G: DirectedGraph + ?Sized>(g: &G, assignment: &[usize]) -> f64 {
    let level = Level::from_graph(g);
    let m = level.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let count = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; count];
    let mut tot = vec![0.0; count];
    for u in 0..level.len() {
        tot[assignment[u]] += level.strength(u);
        for &(v, w) in &level.adj[u] {
            if assignment[u] == assignment[v] {
                internal[assignment[u]] += w;
            }
        }
    }
    (0..count)
        .map(|c| internal[c] / (2.0 * m) - (tot[c] / (2.0 * m)).powi(2))
        .sum()
}

/// Runs Louvain. With `seed = None` nodes are scanned in ascending order.
pub fn louvain_communities<G: DirectedGraph + ?Sized>(
    g: &G,
    seed: Option<u64>,
) -> CommunityPartition {
    let n = g.node_count();
    let mut level = Level::from_graph(g);
    let m = level.total_weight();
    let mut assignment: Vec<usize> = (0..n).collect();
    if m == 0.0 {
        return CommunityPartition {
            assignment,
            community_count: n,
            modularity: 0.0,
        };
    }
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    loop {
        let len = level.len();
        let mut order: Vec<usize> = (0..len).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut community: Vec<usize> = (0..len).collect();
        let moved = local_moves(&level, &mut community, &order, 2.0 * m);
        if !moved {
            break;
        }
        let count = renumber(&mut community);
        for a in assignment.iter_mut() {
            *a = community[*a];
        }
        if count == len {
            break;
        }
        level = level.aggregate(&community, count);
    }
    let community_count = renumber(&mut assignment);
    CommunityPartition {
        modularity: modularity(g, &assignment),
        assignment,
        community_count,
    }
}
