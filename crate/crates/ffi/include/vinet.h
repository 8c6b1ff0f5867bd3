#ifndef VINET_H
#define VINET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VinetEdgeFormat {
  VINET_EDGE_FORMAT_TSV = 0,
  VINET_EDGE_FORMAT_DOT = 1,
} VinetEdgeFormat;

/**
 * Linkage criterion for collection graphs.
 */
typedef enum VinetLinkage {
  VINET_LINKAGE_MIN = 0,
  VINET_LINKAGE_AVG = 1,
  VINET_LINKAGE_MAX = 2,
} VinetLinkage;

/**
 * Result code of every fallible call.
 */
typedef enum VinetStatus {
  VINET_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  VINET_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8, or a value was out of range.
   */
  VINET_STATUS_INVALID_ARGUMENT = 2,
  VINET_STATUS_IO = 3,
  /**
   * Malformed or inconsistent input data.
   */
  VINET_STATUS_DATA = 4,
  VINET_STATUS_CONFIG = 5,
  VINET_STATUS_ORACLE = 6,
  VINET_STATUS_PANIC = 7,
} VinetStatus;

/**
 * Asset metadata and transactions.
 */
typedef struct VinetCatalog VinetCatalog;

/**
 * An embedding matrix with its asset ids.
 */
typedef struct VinetEmbeddings VinetEmbeddings;

/**
 * A directed graph (asset- or collection-level) with string node labels.
 */
typedef struct VinetGraph VinetGraph;

/**
 * Structural statistics. `degree_assortativity` is NaN when undefined.
 */
typedef struct VinetStats {
  size_t node_count;
  size_t edge_count;
  double density;
  double avg_in_degree;
  double degree_assortativity;
  double pct_sources;
  double pct_sinks;
  uint64_t diameter;
  double avg_path_length;
  double transitivity;
  double clustering_coefficient;
  double clustering_coefficient_full_avg;
  size_t scc_count;
  size_t wcc_count;
  double reciprocated_edge_pct;
  double reciprocated_pair_pct;
} VinetStats;

/**
 * Discrete power-law fit. `p_value` is NaN when `bootstraps` was 0.
 */
typedef struct VinetPowerLawFit {
  double alpha;
  uint64_t x_min;
  double ks_statistic;
  double p_value;
  size_t n_tail;
  size_t n_observations;
} VinetPowerLawFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vinet_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * NUL-terminated when `len > 0`). Returns the full message length excluding
 * the terminator, or 0 when no error has been recorded.
 *
 * # Safety
 * `buf` must be NULL or point to at least `len` writable bytes.
 */
size_t vinet_last_error_message(char *buf, size_t len);

/**
 * Loads a catalog from the metadata and transactions TSV files.
 *
 * # Safety
 * Path arguments must be NULL or NUL-terminated strings; `out` must be NULL or writable.
 */
enum VinetStatus vinet_catalog_load(const char *metadata_path,
                                    const char *transactions_path,
                                    struct VinetCatalog **out);

/**
 * Number of assets in the catalog (0 for NULL).
 *
 * # Safety
 * `catalog` must be NULL or a live handle.
 */
size_t vinet_catalog_asset_count(const struct VinetCatalog *catalog);

/**
 * # Safety
 * `catalog` must be NULL or a handle not yet freed.
 */
void vinet_catalog_free(struct VinetCatalog *catalog);

/**
 * Loads an EMBV1 matrix and its ids file.
 *
 * # Safety
 * As for [`vinet_catalog_load`].
 */
enum VinetStatus vinet_embeddings_load(const char *embeddings_path,
                                       const char *ids_path,
                                       struct VinetEmbeddings **out);

/**
 * Rows in the embedding matrix (0 for NULL).
 *
 * # Safety
 * `embeddings` must be NULL or a live handle.
 */
size_t vinet_embeddings_count(const struct VinetEmbeddings *embeddings);

/**
 * Embedding dimension (0 for NULL).
 *
 * # Safety
 * `embeddings` must be NULL or a live handle.
 */
size_t vinet_embeddings_dim(const struct VinetEmbeddings *embeddings);

/**
 * # Safety
 * `embeddings` must be NULL or a handle not yet freed.
 */
void vinet_embeddings_free(struct VinetEmbeddings *embeddings);

/**
 * Builds the asset-level inspiration graph over the closed window
 * `[t_start, t_end]` (epoch seconds). `workers == 0` uses all cores.
 *
 * # Safety
 * Handles must be live; `out` must be NULL or writable.
 */
enum VinetStatus vinet_nft_graph_build(const struct VinetCatalog *catalog,
                                       const struct VinetEmbeddings *embeddings,
                                       int64_t t_start,
                                       int64_t t_end,
                                       double threshold,
                                       size_t workers,
                                       struct VinetGraph **out);

/**
 * Builds the collection-level graph for one linkage criterion.
 *
 * # Safety
 * As for [`vinet_nft_graph_build`].
 */
enum VinetStatus vinet_collection_graph_build(const struct VinetCatalog *catalog,
                                              const struct VinetEmbeddings *embeddings,
                                              int64_t t_start,
                                              int64_t t_end,
                                              enum VinetLinkage criterion,
                                              double threshold,
                                              size_t workers,
                                              struct VinetGraph **out);

/**
 * Builds a graph from explicit `(sources[i], targets[i], weights[i])` triples
 * over nodes `0..node_count`, labelled by their index. `weights` may be NULL
 * (all weights 1).
 *
 * # Safety
 * Non-NULL arrays must hold `edge_count` elements.
 */
enum VinetStatus vinet_graph_from_edges(size_t node_count,
                                        const size_t *sources,
                                        const size_t *targets,
                                        const double *weights,
                                        size_t edge_count,
                                        struct VinetGraph **out);

/**
 * Node count (0 for NULL).
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t vinet_graph_node_count(const struct VinetGraph *graph);

/**
 * Edge count (0 for NULL).
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t vinet_graph_edge_count(const struct VinetGraph *graph);

/**
 * Reads edge `index` (edges are ordered by source, then target).
 *
 * # Safety
 * `graph` must be a live handle; out-pointers must be writable.
 */
enum VinetStatus vinet_graph_edge(const struct VinetGraph *graph,
                                  size_t index,
                                  size_t *source,
                                  size_t *target,
                                  double *weight);

/**
 * Copies the label of `node` into `buf` like [`vinet_last_error_message`];
 * `*label_len` receives the full length excluding the terminator.
 *
 * # Safety
 * `buf` must be NULL or hold `len` writable bytes; `label_len` must be writable.
 */
enum VinetStatus vinet_graph_node_label(const struct VinetGraph *graph,
                                        size_t node,
                                        char *buf,
                                        size_t len,
                                        size_t *label_len);

/**
 * Writes the edge list (`source\ttarget\tweight`, or DOT) to `path`.
 *
 * # Safety
 * `graph` must be live; `path` a NUL-terminated string.
 */
enum VinetStatus vinet_graph_export(const struct VinetGraph *graph,
                                    const char *path,
                                    enum VinetEdgeFormat format);

/**
 * Structural statistics with default options (out–in assortativity, directed paths).
 *
 * # Safety
 * `graph` must be live; `out` writable.
 */
enum VinetStatus vinet_graph_stats(const struct VinetGraph *graph, struct VinetStats *out);

/**
 * Fits a discrete power law to `data[0..n]` (zeros are ignored) with
 * `bootstraps` KS resamples seeded by `seed`.
 *
 * # Safety
 * `data` must hold `n` values; `out` must be writable.
 */
enum VinetStatus vinet_powerlaw_fit(const uint64_t *data,
                                    size_t n,
                                    size_t bootstraps,
                                    uint64_t seed,
                                    struct VinetPowerLawFit *out);

/**
 * Cosine similarity of two `d`-dimensional vectors, accumulated in double precision.
 *
 * # Safety
 * `a` and `b` must hold `d` floats; `out` must be writable.
 */
enum VinetStatus vinet_cosine_similarity(const float *a, const float *b, size_t d, double *out);

/**
 * # Safety
 * `graph` must be NULL or a handle not yet freed.
 */
void vinet_graph_free(struct VinetGraph *graph);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VINET_H */
