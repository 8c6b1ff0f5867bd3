//! Collection-level inspiration graph under min / avg / max linkage.
//!
//! For an ordered collection pair `(c_i, c_j)` each asset `a` of `c_i` gets
//! its best similarity to any strictly earlier asset of `c_j`. The linkage
//! aggregates those per-asset maxima and the result is scaled by a sigmoid
//! penalty on the share of `c_i` that actually matched `c_j`.
//!
//! `p` counts the assets of `c_i` whose best score reaches the threshold and
//! `np = |c_i| - p`. The penalty does not depend on the linkage, so for a
//! fixed input the edge sets nest as `min ⊆ avg ⊆ max`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Edge};
use crate::model::{AssetCatalog, EmbeddingStore, TimeWindow, Timestamp};
use crate::nft_graph::{
    check_threshold, intern, time_order, windowed_assets, BuildOptions, BuildReport,
};
use crate::similarity::{with_workers, PackedRows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkageCriterion {
    Min,
    Avg,
    Max,
}

impl LinkageCriterion {
    pub const ALL: [LinkageCriterion; 3] = [
        LinkageCriterion::Min,
        LinkageCriterion::Avg,
        LinkageCriterion::Max,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkageCriterion::Min => "min",
            LinkageCriterion::Avg => "avg",
            LinkageCriterion::Max => "max",
        }
    }

    fn apply(self, scores: &[f64]) -> f64 {
        match self {
            LinkageCriterion::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
            LinkageCriterion::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            LinkageCriterion::Avg => scores.iter().sum::<f64>() / scores.len() as f64,
        }
    }
}

impl fmt::Display for LinkageCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkageCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(LinkageCriterion::Min),
            "avg" | "mean" => Ok(LinkageCriterion::Avg),
            "max" => Ok(LinkageCriterion::Max),
            other => Err(Error::Config(format!("unknown linkage criterion `{other}`"))),
        }
    }
}

/// Sigmoid `1 / (1 + exp(-p/np))`, with `np = 0` mapped to its limit 1.
pub fn penalty_factor(p: u64, np: u64) -> f64 {
    if np == 0 {
        return 1.0;
    }
    1.0 / (1.0 + (-(p as f64) / np as f64).exp())
}

/// Linkage of `scores` times the penalty. `None` for an empty score list.
pub fn aggregate_collection_weight(
    scores: &[f64],
    criterion: LinkageCriterion,
    p: u64,
    np: u64,
) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let w = criterion.apply(scores) * penalty_factor(p, np);
    debug_assert!(w <= 1.0 + 1e-12, "aggregated weight {w} exceeds 1");
    Some(w.clamp(0.0, 1.0))
}

/// Per-asset best scores of `c_i` against `c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossScores {
    /// One entry per asset of `c_i` (ascending id) that has an earlier counterpart in `c_j`.
    pub scores: Vec<f64>,
    /// Windowed, embedded assets of `c_i`; the penalty denominator.
    pub total: usize,
}

impl CrossScores {
    /// `(p, np)` for the given threshold.
    pub fn match_counts(&self, threshold: f64) -> (u64, u64) {
        let p = self.scores.iter().filter(|&&s| s >= threshold).count() as u64;
        (p, self.total as u64 - p)
    }
}

/// Straight per-pair computation, used for single pairs and as the reference
/// for the blocked builder.
pub fn best_cross_similarities(
    c_i: &str,
    c_j: &str,
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: TimeWindow,
) -> Result<CrossScores> {
    let members = |c: &str| -> Result<Vec<(&str, Timestamp, &[f32])>> {
        let ids = catalog
            .collections()
            .get(c)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown collection `{c}`")))?;
        Ok(ids
            .iter()
            .filter_map(|id| {
                let rec = catalog.get(id)?;
                let v = store.vector(id)?;
                window
                    .contains(rec.first_sale_ts)
                    .then_some((id.as_str(), rec.first_sale_ts, v))
            })
            .collect())
    };
    let (left, right) = (members(c_i)?, members(c_j)?);
    let mut scores = Vec::new();
    for (_, ta, va) in &left {
        let mut best: Option<f64> = None;
        for (_, tb, vb) in &right {
            if ta > tb {
                let s = crate::model::cosine_similarity(va, vb)?;
                best = Some(best.map_or(s, |b: f64| b.max(s)));
            }
        }
        scores.extend(best);
    }
    Ok(CrossScores {
        scores,
        total: left.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionGraph {
    pub window: TimeWindow,
    pub criterion: LinkageCriterion,
    pub threshold: f64,
    /// Collection ids in ascending order.
    pub nodes: Vec<String>,
    /// Sorted by `(source, target)`.
    pub edges: Vec<Edge>,
    pub skipped: Vec<String>,
}

impl DirectedGraph for CollectionGraph {
    fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn node_label(&self, node: usize) -> &str {
        &self.nodes[node]
    }

    fn edges(&self) -> &[Edge] {
        &self.edges
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionBuildReport {
    #[serde(flatten)]
    pub base: BuildReport,
    /// Ordered edges whose reverse edge also exists, in percent of all edges.
    pub reciprocated_edge_pct: f64,
    /// Mutual collection pairs, in percent of linked unordered pairs.
    pub reciprocated_pair_pct: f64,
}

impl CollectionGraph {
    pub fn report(&self) -> CollectionBuildReport {
        let (edge_pct, pair_pct) = crate::metrics::structural::reciprocity(self);
        CollectionBuildReport {
            base: BuildReport {
                nodes: self.nodes.len(),
                edges: self.edges.len(),
                skipped_assets: self.skipped.len(),
                skipped_ids: self.skipped.clone(),
                threshold: self.threshold,
                window: self.window,
                criterion: Some(self.criterion.to_string()),
            },
            reciprocated_edge_pct: edge_pct,
            reciprocated_pair_pct: pair_pct,
        }
    }
}

/// Per ordered collection pair, the best-score lists computed with the blocked kernel.
struct PairScores {
    nodes: Vec<String>,
    sizes: Vec<usize>,
    /// `(source collection, target collection, per-asset best scores)`, sorted.
    pairs: Vec<(usize, usize, Vec<f64>)>,
    skipped: Vec<String>,
}

fn pair_scores(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: &TimeWindow,
    workers: Option<usize>,
) -> Result<PairScores> {
    let assets = windowed_assets(catalog, store, window);
    if assets.ids.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let (order, earlier) = time_order(&assets.ts);
    let sorted_rows: Vec<usize> = order.iter().map(|&i| assets.rows[i]).collect();
    let sorted_labels: Vec<&str> = order.iter().map(|&i| assets.ids[i]).collect();
    let packed = PackedRows::gather(store, &sorted_rows, &sorted_labels)?;

    // Collection codes follow ascending collection id so node order is stable.
    let mut names: Vec<&str> = intern(&assets.collections).1;
    names.sort_unstable();
    let code_of = |c: &str| names.binary_search(&c).expect("interned") as u32;
    let sorted_coll: Vec<u32> = order.iter().map(|&i| code_of(assets.collections[i])).collect();
    let n_coll = names.len();

    // Members of each collection as sorted positions, in ascending asset id.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_coll];
    let mut pos_of = vec![0usize; order.len()];
    for (p, &i) in order.iter().enumerate() {
        pos_of[i] = p;
    }
    for (i, c) in assets.collections.iter().enumerate() {
        members[code_of(c) as usize].push(pos_of[i]);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();

    let pairs: Vec<(usize, usize, Vec<f64>)> = with_workers(workers, || {
        members
            .par_iter()
            .enumerate()
            .flat_map_iter(|(ci, rows)| {
                let mut best = vec![f64::NEG_INFINITY; n_coll];
                let mut touched: Vec<usize> = Vec::new();
                let mut lists: Vec<Vec<f64>> = vec![Vec::new(); n_coll];
                for &p in rows {
                    packed.for_each_tile(
                        std::slice::from_ref(&p),
                        0..earlier[p],
                        |_, q| sorted_coll[q] as usize != ci,
                        |_, q, sim| {
                            let cj = sorted_coll[q] as usize;
                            if best[cj] == f64::NEG_INFINITY {
                                touched.push(cj);
                            }
                            if sim > best[cj] {
                                best[cj] = sim;
                            }
                        },
                    );
                    for &cj in &touched {
                        lists[cj].push(best[cj]);
                        best[cj] = f64::NEG_INFINITY;
                    }
                    touched.clear();
                }
                lists
                    .into_iter()
                    .enumerate()
                    .filter(|(_, l)| !l.is_empty())
                    .map(move |(cj, l)| (ci, cj, l))
                    .collect::<Vec<_>>()
            })
            .collect()
    });

    Ok(PairScores {
        nodes: names.iter().map(|s| s.to_string()).collect(),
        sizes,
        pairs,
        skipped: assets.skipped,
    })
}

pub fn build_collection_graph(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: TimeWindow,
    criterion: LinkageCriterion,
    threshold: f64,
) -> Result<CollectionGraph> {
    build_collection_graph_with(
        catalog,
        store,
        window,
        criterion,
        &BuildOptions {
            threshold,
            ..BuildOptions::default()
        },
    )
}

pub fn build_collection_graph_with(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: TimeWindow,
    criterion: LinkageCriterion,
    opts: &BuildOptions,
) -> Result<CollectionGraph> {
    Ok(build_all_criteria(catalog, store, window, &[criterion], opts)?
        .pop()
        .expect("one criterion requested"))
}

/// Builds one graph per criterion while computing the pairwise scores once.
pub fn build_all_criteria(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: TimeWindow,
    criteria: &[LinkageCriterion],
    opts: &BuildOptions,
) -> Result<Vec<CollectionGraph>> {
    check_threshold(opts.threshold)?;
    let scored = pair_scores(catalog, store, &window, opts.workers)?;
    Ok(criteria
        .iter()
        .map(|&criterion| {
            let edges = scored
                .pairs
                .iter()
                .filter_map(|(ci, cj, scores)| {
                    let p = scores.iter().filter(|&&s| s >= opts.threshold).count() as u64;
                    let np = scored.sizes[*ci] as u64 - p;
                    let w = aggregate_collection_weight(scores, criterion, p, np)?;
                    (w >= opts.threshold).then_some(Edge {
                        source: *ci,
                        target: *cj,
                        weight: w,
                    })
                })
                .collect();
            CollectionGraph {
                window,
                criterion,
                threshold: opts.threshold,
                nodes: scored.nodes.clone(),
                edges,
                skipped: scored.skipped.clone(),
            }
        })
        .collect())
}
