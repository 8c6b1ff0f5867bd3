//! C ABI for the vinet analytics engine.
//!
//! Conventions:
//! - Objects are opaque handles created by `vinet_*_load` / `vinet_*_build`
//!   and released with the matching `vinet_*_free`. Freeing NULL is a no-op.
//! - Every fallible function returns a [`VinetStatus`]; results are written
//!   through out-pointers only on `VINET_STATUS_OK`.
//! - On failure, `vinet_last_error_message` returns a description of the most
//!   recent error on the calling thread.
//! - Strings are NUL-terminated UTF-8. Paths are borrowed for the call only.
//! - Panics never cross the boundary; they surface as `VINET_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use vinet::collection_graph::{build_collection_graph_with, LinkageCriterion};
use vinet::graph::{export_edge_list, Digraph, DirectedGraph, EdgeListFormat};
use vinet::metrics::{fit_power_law, structural_summary, PowerLawOptions};
use vinet::model::{cosine_similarity, load_catalog, load_embeddings, AssetCatalog, EmbeddingStore, TimeWindow};
use vinet::nft_graph::{build_nft_graph_with, BuildOptions};
use vinet::{Error, ErrorCategory};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VinetStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8, or a value was out of range.
    InvalidArgument = 2,
    Io = 3,
    /// Malformed or inconsistent input data.
    Data = 4,
    Config = 5,
    Oracle = 6,
    Panic = 7,
}

/// Asset metadata and transactions.
pub struct VinetCatalog(AssetCatalog);

/// An embedding matrix with its asset ids.
pub struct VinetEmbeddings(EmbeddingStore);

/// A directed graph (asset- or collection-level) with string node labels.
pub struct VinetGraph(Digraph);

/// Linkage criterion for collection graphs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VinetLinkage {
    Min = 0,
    Avg = 1,
    Max = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VinetEdgeFormat {
    Tsv = 0,
    Dot = 1,
}

/// Structural statistics. `degree_assortativity` is NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VinetStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
    pub avg_in_degree: f64,
    pub degree_assortativity: f64,
    pub pct_sources: f64,
    pub pct_sinks: f64,
    pub diameter: u64,
    pub avg_path_length: f64,
    pub transitivity: f64,
    pub clustering_coefficient: f64,
    pub clustering_coefficient_full_avg: f64,
    pub scc_count: usize,
    pub wcc_count: usize,
    pub reciprocated_edge_pct: f64,
    pub reciprocated_pair_pct: f64,
}

/// Discrete power-law fit. `p_value` is NaN when `bootstraps` was 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VinetPowerLawFit {
    pub alpha: f64,
    pub x_min: u64,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub n_tail: usize,
    pub n_observations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VinetStatus {
    match e.category() {
        ErrorCategory::Io => VinetStatus::Io,
        ErrorCategory::Data => VinetStatus::Data,
        ErrorCategory::Config => VinetStatus::Config,
        ErrorCategory::Oracle => VinetStatus::Oracle,
    }
}

struct Fail(VinetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VinetStatus::NullPointer, format!("`{what}` is NULL"))
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> VinetStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VinetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            VinetStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(VinetStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn window(t_start: i64, t_end: i64) -> Result<TimeWindow, Fail> {
    Ok(TimeWindow::new(t_start, t_end)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vinet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated when `len > 0`). Returns the full message length excluding
/// the terminator, or 0 when no error has been recorded.
///
/// # Safety
/// `buf` must be NULL or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vinet_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads a catalog from the metadata and transactions TSV files.
///
/// # Safety
/// Path arguments must be NULL or NUL-terminated strings; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_catalog_load(
    metadata_path: *const c_char,
    transactions_path: *const c_char,
    out: *mut *mut VinetCatalog,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let meta = path_arg(metadata_path, "metadata_path")?;
        let tx = path_arg(transactions_path, "transactions_path")?;
        let cat = load_catalog(&meta, &tx)?;
        *out = Box::into_raw(Box::new(VinetCatalog(cat)));
        Ok(())
    })
}

/// Number of assets in the catalog (0 for NULL).
///
/// # Safety
/// `catalog` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vinet_catalog_asset_count(catalog: *const VinetCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `catalog` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vinet_catalog_free(catalog: *mut VinetCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Loads an EMBV1 matrix and its ids file.
///
/// # Safety
/// As for [`vinet_catalog_load`].
#[no_mangle]
pub unsafe extern "C" fn vinet_embeddings_load(
    embeddings_path: *const c_char,
    ids_path: *const c_char,
    out: *mut *mut VinetEmbeddings,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bin = path_arg(embeddings_path, "embeddings_path")?;
        let ids = path_arg(ids_path, "ids_path")?;
        let store = load_embeddings(&bin, &ids)?;
        *out = Box::into_raw(Box::new(VinetEmbeddings(store)));
        Ok(())
    })
}

/// Rows in the embedding matrix (0 for NULL).
///
/// # Safety
/// `embeddings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vinet_embeddings_count(embeddings: *const VinetEmbeddings) -> usize {
    embeddings.as_ref().map_or(0, |e| e.0.n())
}

/// Embedding dimension (0 for NULL).
///
/// # Safety
/// `embeddings` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vinet_embeddings_dim(embeddings: *const VinetEmbeddings) -> usize {
    embeddings.as_ref().map_or(0, |e| e.0.d())
}

/// # Safety
/// `embeddings` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vinet_embeddings_free(embeddings: *mut VinetEmbeddings) {
    if !embeddings.is_null() {
        drop(Box::from_raw(embeddings));
    }
}

/// Builds the asset-level inspiration graph over the closed window
/// `[t_start, t_end]` (epoch seconds). `workers == 0` uses all cores.
///
/// # Safety
/// Handles must be live; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_nft_graph_build(
    catalog: *const VinetCatalog,
    embeddings: *const VinetEmbeddings,
    t_start: i64,
    t_end: i64,
    threshold: f64,
    workers: usize,
    out: *mut *mut VinetGraph,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cat = handle(catalog, "catalog")?;
        let emb = handle(embeddings, "embeddings")?;
        let opts = BuildOptions {
            threshold,
            workers: (workers > 0).then_some(workers),
        };
        let g = build_nft_graph_with(&cat.0, &emb.0, window(t_start, t_end)?, &opts)?;
        *out = Box::into_raw(Box::new(VinetGraph(Digraph::from_view(&g))));
        Ok(())
    })
}

/// Builds the collection-level graph for one linkage criterion.
///
/// # Safety
/// As for [`vinet_nft_graph_build`].
#[no_mangle]
pub unsafe extern "C" fn vinet_collection_graph_build(
    catalog: *const VinetCatalog,
    embeddings: *const VinetEmbeddings,
    t_start: i64,
    t_end: i64,
    criterion: VinetLinkage,
    threshold: f64,
    workers: usize,
    out: *mut *mut VinetGraph,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cat = handle(catalog, "catalog")?;
        let emb = handle(embeddings, "embeddings")?;
        let crit = match criterion {
            VinetLinkage::Min => LinkageCriterion::Min,
            VinetLinkage::Avg => LinkageCriterion::Avg,
            VinetLinkage::Max => LinkageCriterion::Max,
        };
        let opts = BuildOptions {
            threshold,
            workers: (workers > 0).then_some(workers),
        };
        let g = build_collection_graph_with(&cat.0, &emb.0, window(t_start, t_end)?, crit, &opts)?;
        *out = Box::into_raw(Box::new(VinetGraph(Digraph::from_view(&g))));
        Ok(())
    })
}

/// Builds a graph from explicit `(sources[i], targets[i], weights[i])` triples
/// over nodes `0..node_count`, labelled by their index. `weights` may be NULL
/// (all weights 1).
///
/// # Safety
/// Non-NULL arrays must hold `edge_count` elements.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_from_edges(
    node_count: usize,
    sources: *const usize,
    targets: *const usize,
    weights: *const f64,
    edge_count: usize,
    out: *mut *mut VinetGraph,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (s, t) = if edge_count == 0 {
            (&[][..], &[][..])
        } else {
            if sources.is_null() {
                return Err(null("sources"));
            }
            if targets.is_null() {
                return Err(null("targets"));
            }
            (
                std::slice::from_raw_parts(sources, edge_count),
                std::slice::from_raw_parts(targets, edge_count),
            )
        };
        let w = (!weights.is_null() && edge_count > 0).then(|| std::slice::from_raw_parts(weights, edge_count));
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        let edges = (0..edge_count)
            .map(|i| vinet::graph::Edge {
                source: s[i],
                target: t[i],
                weight: w.map_or(1.0, |w| w[i]),
            })
            .collect();
        let g = Digraph::new(labels, edges)?;
        *out = Box::into_raw(Box::new(VinetGraph(g)));
        Ok(())
    })
}

/// Node count (0 for NULL).
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_node_count(graph: *const VinetGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.node_count())
}

/// Edge count (0 for NULL).
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_edge_count(graph: *const VinetGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.edge_count())
}

/// Reads edge `index` (edges are ordered by source, then target).
///
/// # Safety
/// `graph` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_edge(
    graph: *const VinetGraph,
    index: usize,
    source: *mut usize,
    target: *mut usize,
    weight: *mut f64,
) -> VinetStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let (s, t, w) = (out_ptr(source, "source")?, out_ptr(target, "target")?, out_ptr(weight, "weight")?);
        let e = g.0.edges().get(index).ok_or_else(|| {
            Fail(
                VinetStatus::InvalidArgument,
                format!("edge index {index} out of range ({} edges)", g.0.edge_count()),
            )
        })?;
        (*s, *t, *w) = (e.source, e.target, e.weight);
        Ok(())
    })
}

/// Copies the label of `node` into `buf` like [`vinet_last_error_message`];
/// `*label_len` receives the full length excluding the terminator.
///
/// # Safety
/// `buf` must be NULL or hold `len` writable bytes; `label_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_node_label(
    graph: *const VinetGraph,
    node: usize,
    buf: *mut c_char,
    len: usize,
    label_len: *mut usize,
) -> VinetStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let label_len = out_ptr(label_len, "label_len")?;
        if node >= g.0.node_count() {
            return Err(Fail(
                VinetStatus::InvalidArgument,
                format!("node {node} out of range ({} nodes)", g.0.node_count()),
            ));
        }
        let bytes = g.0.node_label(node).as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        *label_len = bytes.len();
        Ok(())
    })
}

/// Writes the edge list (`source\ttarget\tweight`, or DOT) to `path`.
///
/// # Safety
/// `graph` must be live; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_export(
    graph: *const VinetGraph,
    path: *const c_char,
    format: VinetEdgeFormat,
) -> VinetStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let p = path_arg(path, "path")?;
        let f = match format {
            VinetEdgeFormat::Tsv => EdgeListFormat::Tsv,
            VinetEdgeFormat::Dot => EdgeListFormat::Dot,
        };
        export_edge_list(&g.0, &p, f)?;
        Ok(())
    })
}

/// Structural statistics with default options (out–in assortativity, directed paths).
///
/// # Safety
/// `graph` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_stats(graph: *const VinetGraph, out: *mut VinetStats) -> VinetStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let out = out_ptr(out, "out")?;
        let s = structural_summary(&g.0)?;
        *out = VinetStats {
            node_count: s.node_count,
            edge_count: s.edge_count,
            density: s.density,
            avg_in_degree: s.avg_in_degree,
            degree_assortativity: s.degree_assortativity.unwrap_or(f64::NAN),
            pct_sources: s.pct_sources,
            pct_sinks: s.pct_sinks,
            diameter: s.diameter,
            avg_path_length: s.avg_path_length,
            transitivity: s.transitivity_undirected,
            clustering_coefficient: s.clustering_coeff_deg2plus,
            clustering_coefficient_full_avg: s.clustering_coeff_full_avg,
            scc_count: s.scc_count,
            wcc_count: s.wcc_count,
            reciprocated_edge_pct: s.reciprocated_edge_pct,
            reciprocated_pair_pct: s.reciprocated_pair_pct,
        };
        Ok(())
    })
}

/// Fits a discrete power law to `data[0..n]` (zeros are ignored) with
/// `bootstraps` KS resamples seeded by `seed`.
///
/// # Safety
/// `data` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_powerlaw_fit(
    data: *const u64,
    n: usize,
    bootstraps: usize,
    seed: u64,
    out: *mut VinetPowerLawFit,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let xs = if n == 0 {
            &[][..]
        } else if data.is_null() {
            return Err(null("data"));
        } else {
            std::slice::from_raw_parts(data, n)
        };
        let opts = PowerLawOptions {
            bootstraps,
            seed,
            ..PowerLawOptions::default()
        };
        let f = fit_power_law(xs, &opts)?;
        *out = VinetPowerLawFit {
            alpha: f.alpha,
            x_min: f.x_min,
            ks_statistic: f.ks_statistic,
            p_value: f.p_value,
            n_tail: f.n_tail,
            n_observations: f.n_observations,
        };
        Ok(())
    })
}

/// Cosine similarity of two `d`-dimensional vectors, accumulated in double precision.
///
/// # Safety
/// `a` and `b` must hold `d` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vinet_cosine_similarity(
    a: *const f32,
    b: *const f32,
    d: usize,
    out: *mut f64,
) -> VinetStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if a.is_null() || b.is_null() {
            return Err(null(if a.is_null() { "a" } else { "b" }));
        }
        let (a, b) = (std::slice::from_raw_parts(a, d), std::slice::from_raw_parts(b, d));
        *out = cosine_similarity(a, b)?;
        Ok(())
    })
}

/// # Safety
/// `graph` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vinet_graph_free(graph: *mut VinetGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}
