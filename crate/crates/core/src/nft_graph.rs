//! The asset-level inspiration graph.
//!
//! An edge `i -> j` exists when `i` was first sold strictly after `j`, the two
//! assets belong to different collections, and their cosine similarity reaches
//! the threshold. Edges therefore always point from later to earlier assets,
//! which makes the graph acyclic by construction.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Edge};
use crate::model::{AssetCatalog, EmbeddingStore, TimeWindow, Timestamp};
use crate::similarity::{with_workers, PackedRows, TILE};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub threshold: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            threshold: DEFAULT_THRESHOLD,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspirationGraph {
    pub window: TimeWindow,
    pub threshold: f64,
    /// Asset ids in ascending order; a node's index is its position here.
    pub nodes: Vec<String>,
    pub timestamps: Vec<Timestamp>,
    /// Sorted by `(source, target)`.
    pub edges: Vec<Edge>,
    /// In-window assets that had no embedding, ascending.
    pub skipped: Vec<String>,
}

impl DirectedGraph for InspirationGraph {
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

impl InspirationGraph {
    pub fn node_index(&self, asset_id: &str) -> Option<usize> {
        self.nodes
            .binary_search_by(|n| n.as_str().cmp(asset_id))
            .ok()
    }

    pub fn report(&self) -> BuildReport {
        BuildReport {
            nodes: self.nodes.len(),
            edges: self.edges.len(),
            skipped_assets: self.skipped.len(),
            skipped_ids: self.skipped.clone(),
            threshold: self.threshold,
            window: self.window,
            criterion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub nodes: usize,
    pub edges: usize,
    pub skipped_assets: usize,
    pub skipped_ids: Vec<String>,
    pub threshold: f64,
    pub window: TimeWindow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
}

/// Windowed assets that have embeddings, in ascending id order.
pub(crate) struct WindowedAssets<'a> {
    pub ids: Vec<&'a str>,
    pub rows: Vec<usize>,
    pub ts: Vec<Timestamp>,
    pub collections: Vec<&'a str>,
    pub skipped: Vec<String>,
}

pub(crate) fn windowed_assets<'a>(
    catalog: &'a AssetCatalog,
    store: &EmbeddingStore,
    window: &TimeWindow,
) -> WindowedAssets<'a> {
    let mut out = WindowedAssets {
        ids: Vec::new(),
        rows: Vec::new(),
        ts: Vec::new(),
        collections: Vec::new(),
        skipped: Vec::new(),
    };
    for rec in catalog.assets() {
        if !window.contains(rec.first_sale_ts) {
            continue;
        }
        match store.row_of(&rec.asset_id) {
            Some(row) => {
                out.ids.push(&rec.asset_id);
                out.rows.push(row);
                out.ts.push(rec.first_sale_ts);
                out.collections.push(&rec.collection_id);
            }
            None => out.skipped.push(rec.asset_id.clone()),
        }
    }
    out
}

/// Interns strings to dense codes in first-seen order.
pub(crate) fn intern<'a>(values: &[&'a str]) -> (Vec<u32>, Vec<&'a str>) {
    let mut map: HashMap<&str, u32> = HashMap::new();
    let mut names = Vec::new();
    let codes = values
        .iter()
        .map(|v| {
            *map.entry(v).or_insert_with(|| {
                names.push(*v);
                (names.len() - 1) as u32
            })
        })
        .collect();
    (codes, names)
}

/// Permutation sorting nodes by `(ts, index)` plus, per sorted position, the
/// number of sorted positions with a strictly smaller timestamp.
pub(crate) fn time_order(ts: &[Timestamp]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by_key(|&i| (ts[i], i));
    let mut earlier = vec![0usize; order.len()];
    let mut start = 0;
    for p in 0..order.len() {
        if p > 0 && ts[order[p]] != ts[order[p - 1]] {
            start = p;
        }
        earlier[p] = start;
    }
    (order, earlier)
}

pub fn build_nft_graph(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: TimeWindow,
    threshold: f64,
) -> Result<InspirationGraph> {
    build_nft_graph_with(
        catalog,
        store,
        window,
        &BuildOptions {
            threshold,
            ..BuildOptions::default()
        },
    )
}

pub fn build_nft_graph_with(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    window: TimeWindow,
    opts: &BuildOptions,
) -> Result<InspirationGraph> {
    check_threshold(opts.threshold)?;
    let assets = windowed_assets(catalog, store, &window);
    if assets.ids.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if !assets.skipped.is_empty() {
        log::info!("{} in-window assets lack embeddings", assets.skipped.len());
    }

    let (order, earlier) = time_order(&assets.ts);
    let sorted_rows: Vec<usize> = order.iter().map(|&i| assets.rows[i]).collect();
    let sorted_labels: Vec<&str> = order.iter().map(|&i| assets.ids[i]).collect();
    let packed = PackedRows::gather(store, &sorted_rows, &sorted_labels)?;
    let (coll_codes, _) = intern(&assets.collections);
    let sorted_coll: Vec<u32> = order.iter().map(|&i| coll_codes[i]).collect();

    let threshold = opts.threshold;
    let positions: Vec<usize> = (0..order.len()).collect();
    let mut edges: Vec<Edge> = with_workers(opts.workers, || {
        positions
            .par_chunks(TILE)
            .flat_map_iter(|block| {
                let col_end = block.iter().map(|&p| earlier[p]).max().unwrap_or(0);
                let mut local = Vec::new();
                packed.for_each_tile(
                    block,
                    0..col_end,
                    |p, q| q < earlier[p] && sorted_coll[p] != sorted_coll[q],
                    |p, q, sim| {
                        if sim >= threshold {
                            local.push(Edge {
                                source: order[p],
                                target: order[q],
                                weight: sim.min(1.0),
                            });
                        }
                    },
                );
                local
            })
            .collect()
    });
    edges.sort_by_key(|a| (a.source, a.target));

    Ok(InspirationGraph {
        window,
        threshold,
        nodes: assets.ids.iter().map(|s| s.to_string()).collect(),
        timestamps: assets.ts,
        edges,
        skipped: assets.skipped,
    })
}
