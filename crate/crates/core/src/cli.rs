//! The `vinet` command line.
//!
//! Every subcommand resolves one configuration (TOML file overlaid by flags),
//! writes its artifacts into the output directory and finishes with a
//! `<subcommand>.manifest.json` recording the configuration, its hash, the
//! seed, and SHA-256 digests of every input and artifact. JSON artifacts carry
//! the configuration hash themselves.
//!
//! Exit codes: 0 success, 1 data or I/O error, 2 usage or configuration error,
//! 3 oracle failure.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::collection_graph::{build_all_criteria, LinkageCriterion};
use crate::error::{Error, ErrorCategory, Result};
use crate::graph::{load_edge_list, render_edge_list, render_node_list, Digraph, DirectedGraph, EdgeListFormat};
use crate::market::{classify_roles, financial_dichotomy, Pooling};
use crate::metrics::{
    fit_power_law, louvain_communities, structural_summary_with, AssortativityFlavor, PathMode,
    PowerLawOptions, StatsOptions,
};
use crate::model::{load_catalog, load_embeddings, AssetCatalog, EmbeddingStore, TimeWindow, Timestamp};
use crate::nft_graph::{build_nft_graph_with, BuildOptions, DEFAULT_THRESHOLD};
use crate::shap::{
    explain_pair, heatmap_csv, serve_toy_protocol, toy, write_heatmap_png, FeatureGrid, ProcessOracle,
    ShapleyConfig,
};
use crate::timeseries::{
    build_series, load_btc_csv, parse_date, read_series_csv, PairScope, Sampling, SeriesKind, SeriesOptions,
    SimilarityMode,
};
use crate::tlcc::{align, tlcc};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Config => EXIT_USAGE,
        ErrorCategory::Io | ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Oracle => EXIT_ORACLE,
    }
}

/// A window bound: epoch seconds, an ISO date or an RFC 3339 timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    Epoch(i64),
    Text(String),
}

impl FromStr for TimeSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().parse::<i64>() {
            Ok(v) => TimeSpec::Epoch(v),
            Err(_) => TimeSpec::Text(s.trim().to_string()),
        })
    }
}

impl fmt::Display for TimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSpec::Epoch(v) => write!(f, "{v}"),
            TimeSpec::Text(s) => f.write_str(s),
        }
    }
}

impl TimeSpec {
    /// Resolves to epoch seconds. A bare date used as a window end covers the whole day.
    pub fn resolve(&self, is_end: bool) -> Result<Timestamp> {
        match self {
            TimeSpec::Epoch(v) => Ok(*v),
            TimeSpec::Text(s) => {
                if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
                    return Ok(dt.timestamp());
                }
                if s.len() == 10 {
                    if let Some(day) = parse_date(s) {
                        return Ok(if is_end { day + 86_399 } else { day });
                    }
                }
                Err(Error::Config(format!(
                    "cannot read time `{s}` (use epoch seconds, YYYY-MM-DD or RFC 3339)"
                )))
            }
        }
    }
}

/// Every configurable value. The same keys are accepted in the TOML file and as flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metadata: Option<PathBuf>,
    pub transactions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub ids: Option<PathBuf>,
    pub btc_csv: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub window_start: Option<TimeSpec>,
    pub window_end: Option<TimeSpec>,
    pub level: Option<String>,
    pub threshold: Option<f64>,
    pub criterion: Option<String>,
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub assortativity: Option<AssortativityFlavor>,
    pub paths: Option<PathMode>,
    pub bootstraps: Option<usize>,
    pub degree: Option<String>,
    pub min_tail: Option<usize>,
    pub louvain_seed: Option<u64>,
    pub pooling: Option<Pooling>,
    pub kinds: Option<Vec<String>>,
    pub sampling: Option<Sampling>,
    pub similarity_mode: Option<String>,
    pub scope: Option<PairScope>,
    pub pair_cap: Option<usize>,
    pub exact_limit: Option<usize>,
    pub forward_fill: Option<bool>,
    pub series_a: Option<PathBuf>,
    pub series_b: Option<PathBuf>,
    pub tlcc_max_lag: Option<usize>,
    pub pair_id: Option<String>,
    pub samples: Option<usize>,
    pub max_oracle_calls: Option<usize>,
    pub oracle_timeout_secs: Option<u64>,
    pub oracle_command: Option<Vec<String>>,
    pub toy: Option<bool>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub cell: Option<u32>,
    pub heatmap_px: Option<usize>,
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing required setting `{key}` (flag --{} or config key `{key}`)", key.replace('_', "-")))
}

impl RunConfig {
    fn window(&self) -> Result<TimeWindow> {
        let start = self.window_start.as_ref().map(|t| t.resolve(false)).transpose()?;
        let end = self.window_end.as_ref().map(|t| t.resolve(true)).transpose()?;
        match (start, end) {
            (None, None) => Ok(TimeWindow::unbounded()),
            (s, e) => TimeWindow::new(s.unwrap_or(Timestamp::MIN), e.unwrap_or(Timestamp::MAX)),
        }
    }

    fn threshold(&mut self) -> f64 {
        *self.threshold.get_or_insert(DEFAULT_THRESHOLD)
    }

    fn seed(&mut self) -> u64 {
        *self.seed.get_or_insert(0)
    }
}

// ---- argument structs ----------------------------------------------------
//
// Field names match `RunConfig` keys: unset flags serialise to null and are
// dropped before overlaying the file configuration.

#[derive(Debug, Args, Serialize)]
struct CatalogArgs {
    /// Asset metadata TSV (asset_id, collection_id, category[, first_sale_ts]).
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Transactions TSV (asset_id, ts, price_usd).
    #[arg(long)]
    transactions: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EmbeddingArgs {
    /// EMBV1 embedding matrix.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Row ids for the embedding matrix, one per line.
    #[arg(long)]
    ids: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct WindowArgs {
    /// Window start (epoch seconds, YYYY-MM-DD or RFC 3339), inclusive.
    #[arg(long)]
    window_start: Option<TimeSpec>,
    /// Window end, inclusive; a bare date covers that whole day.
    #[arg(long)]
    window_end: Option<TimeSpec>,
}

#[derive(Debug, Args, Serialize)]
struct RunArgs {
    /// Directory for artifacts and the manifest (default: current directory).
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    /// Seed for every randomized stage (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct GraphSourceArgs {
    /// Read a TSV edge list instead of building the graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Node list for --graph, one label per line (keeps isolated nodes).
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Graph to build: nft or collection.
    #[arg(long)]
    level: Option<String>,
    /// Cosine cutoff in (0, 1] when building the graph.
    #[arg(long)]
    threshold: Option<f64>,
    /// Linkage criterion for collection graphs: min, avg or max.
    #[arg(long)]
    criterion: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    #[serde(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    window: WindowArgs,
}

#[derive(Debug, Args, Serialize)]
struct BuildGraphArgs {
    #[command(flatten)]
    #[serde(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    #[serde(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Cosine cutoff in (0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Edge list format: tsv or dot.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct BuildCollectionsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    #[serde(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Cutoff in (0, 1] on the penalised collection weight.
    #[arg(long)]
    threshold: Option<f64>,
    /// min, avg, max or all.
    #[arg(long)]
    criterion: Option<String>,
    /// Edge list format: tsv or dot.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: GraphSourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// out-in, in-in, out-out or in-out.
    #[arg(long)]
    assortativity: Option<AssortativityFlavor>,
    /// directed or undirected shortest paths.
    #[arg(long)]
    paths: Option<PathMode>,
    /// json or csv.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct PowerlawArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: GraphSourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Bootstrap resamples for the p-value.
    #[arg(long)]
    bootstraps: Option<usize>,
    /// in, out or both.
    #[arg(long)]
    degree: Option<String>,
    /// Smallest admissible tail size.
    #[arg(long)]
    min_tail: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct CommunitiesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: GraphSourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Shuffle the node scan order with this seed (default: ascending order).
    #[arg(long)]
    louvain_seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
struct MarketArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: GraphSourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// per-asset or per-transaction.
    #[arg(long)]
    pooling: Option<Pooling>,
}

#[derive(Debug, Args, Serialize)]
struct SeriesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    #[serde(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// BTC daily prices, header `Date,Close`.
    #[arg(long)]
    btc_csv: Option<PathBuf>,
    /// Series to build (repeatable); default: every series the inputs allow.
    #[arg(long = "kind")]
    kinds: Option<Vec<String>>,
    /// weekly or monthly.
    #[arg(long)]
    sampling: Option<Sampling>,
    /// all-pairs or edges-only.
    #[arg(long)]
    similarity_mode: Option<String>,
    /// Threshold for edges-only similarity.
    #[arg(long)]
    threshold: Option<f64>,
    /// all, within or across (category).
    #[arg(long)]
    scope: Option<PairScope>,
    /// Uniformly sampled pairs once the asset count reaches --exact-limit.
    #[arg(long)]
    pair_cap: Option<usize>,
    /// Below this many assets the similarity series uses every pair.
    #[arg(long)]
    exact_limit: Option<usize>,
    /// Fill BTC gaps with the previous close.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    forward_fill: bool,
}

#[derive(Debug, Args, Serialize)]
struct TlccArgs {
    /// Series CSV `bucket_start,value` for s.
    #[arg(long)]
    series_a: Option<PathBuf>,
    /// Series CSV for s'.
    #[arg(long)]
    series_b: Option<PathBuf>,
    /// Largest lag in buckets (default: one year of buckets).
    #[arg(long)]
    tlcc_max_lag: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args, Serialize)]
struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Identifier sent to the oracle in the handshake.
    #[arg(long)]
    pair_id: Option<String>,
    /// Oracle-evaluation budget K.
    #[arg(long)]
    samples: Option<usize>,
    /// Fail instead of exceeding this many oracle evaluations.
    #[arg(long)]
    max_oracle_calls: Option<usize>,
    /// Per-reply timeout for the external oracle.
    #[arg(long)]
    oracle_timeout_secs: Option<u64>,
    /// Use the in-process toy oracle instead of an external one.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    toy: bool,
    /// Image width of the toy oracle's grid (external oracles advertise their own).
    #[arg(long)]
    width: Option<u32>,
    /// Image height of the toy oracle's grid.
    #[arg(long)]
    height: Option<u32>,
    /// Side of one square feature cell, in pixels.
    #[arg(long)]
    cell: Option<u32>,
    /// Pixels per cell in the heatmap PNG.
    #[arg(long)]
    heatmap_px: Option<usize>,
    /// External oracle program and its arguments; consumes the rest of the line.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    oracle_command: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct ToyOracleArgs {
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    #[arg(long, default_value_t = 64)]
    cell: u32,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the asset-level inspiration graph.
    BuildGraph(BuildGraphArgs),
    /// Build collection-level graphs for one or all linkage criteria.
    BuildCollections(BuildCollectionsArgs),
    /// Structural statistics of a graph.
    Stats(StatsArgs),
    /// Power-law fits of the degree distributions.
    Powerlaw(PowerlawArgs),
    /// Louvain communities.
    Communities(CommunitiesArgs),
    /// Inspiring vs inspired market indicators.
    Market(MarketArgs),
    /// Calendar-bucketed time series.
    Series(SeriesArgs),
    /// Time-lagged cross-correlation of two series CSVs.
    Tlcc(TlccArgs),
    /// Shapley explanation of one image pair.
    Explain(ExplainArgs),
    /// Serve the oracle protocol with a toy game (for tests).
    #[command(hide = true)]
    ToyOracle(ToyOracleArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildGraph(_) => "build-graph",
            Command::BuildCollections(_) => "build-collections",
            Command::Stats(_) => "stats",
            Command::Powerlaw(_) => "powerlaw",
            Command::Communities(_) => "communities",
            Command::Market(_) => "market",
            Command::Series(_) => "series",
            Command::Tlcc(_) => "tlcc",
            Command::Explain(_) => "explain",
            Command::ToyOracle(_) => "toy-oracle",
        }
    }

    fn flags(&self) -> Result<Value> {
        Ok(match self {
            Command::BuildGraph(a) => serde_json::to_value(a)?,
            Command::BuildCollections(a) => serde_json::to_value(a)?,
            Command::Stats(a) => serde_json::to_value(a)?,
            Command::Powerlaw(a) => serde_json::to_value(a)?,
            Command::Communities(a) => serde_json::to_value(a)?,
            Command::Market(a) => serde_json::to_value(a)?,
            Command::Series(a) => serde_json::to_value(a)?,
            Command::Tlcc(a) => serde_json::to_value(a)?,
            Command::Explain(a) => serde_json::to_value(a)?,
            Command::ToyOracle(_) => Value::Object(Map::new()),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "vinet", version, about = "Visual-inspiration network analytics for NFT markets")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Overlays `flags` (non-null values) onto the file configuration.
fn resolve_config(file: Option<&Path>, flags: Value) -> Result<RunConfig> {
    let mut merged = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let cfg: RunConfig = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::to_value(cfg)?
        }
        None => Value::Object(Map::new()),
    };
    if let (Value::Object(base), Value::Object(over)) = (&mut merged, flags) {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a Value,
    config_hash: &'a str,
    seed: u64,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    created_at: String,
}

/// Artifact bookkeeping for one subcommand run.
struct Run {
    subcommand: &'static str,
    out_dir: PathBuf,
    config: RunConfig,
    inputs: Vec<PathBuf>,
    artifacts: Vec<FileDigest>,
}

impl Run {
    fn new(subcommand: &'static str, config: RunConfig) -> Result<Self> {
        let out_dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        Ok(Run {
            subcommand,
            out_dir,
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    fn input(&mut self, p: &Path) -> PathBuf {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
        p.to_path_buf()
    }

    /// Marks a configured path as an input and returns it.
    fn required_input(&mut self, v: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let p = v.ok_or_else(|| missing(key))?;
        Ok(self.input(&p))
    }

    fn config_value(&self) -> Result<Value> {
        Ok(strip_nulls(serde_json::to_value(&self.config)?))
    }

    fn config_hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(&self.config_value()?)?.as_bytes()))
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `value` as pretty JSON with `config_hash` and `seed` embedded.
    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut obj = match serde_json::to_value(value)? {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        obj.insert("config_hash".into(), Value::String(self.config_hash()?));
        obj.insert("seed".into(), Value::from(self.config.seed.unwrap_or(0)));
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Registers a file written by other code.
    fn record_file(&mut self, name: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let config = self.config_value()?;
        let config_hash = self.config_hash()?;
        let mut inputs = Vec::new();
        for p in &self.inputs {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            inputs.push(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        let manifest = Manifest {
            tool: "vinet",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config: &config,
            config_hash: &config_hash,
            seed: self.config.seed.unwrap_or(0),
            inputs,
            artifacts: self.artifacts,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let path = self.out_dir.join(format!("{}.manifest.json", self.subcommand));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

// ---- shared loading ------------------------------------------------------

fn load_catalog_from(run: &mut Run) -> Result<AssetCatalog> {
    let meta = run.required_input(run.config.metadata.clone(), "metadata")?;
    let tx = run.required_input(run.config.transactions.clone(), "transactions")?;
    load_catalog(&meta, &tx)
}

fn load_store_from(run: &mut Run) -> Result<EmbeddingStore> {
    let emb = run.required_input(run.config.embeddings.clone(), "embeddings")?;
    let ids = run.required_input(run.config.ids.clone(), "ids")?;
    load_embeddings(&emb, &ids)
}

fn build_options(cfg: &mut RunConfig) -> BuildOptions {
    BuildOptions {
        threshold: cfg.threshold(),
        workers: cfg.workers,
    }
}

fn parse_criteria(s: &str) -> Result<Vec<LinkageCriterion>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(LinkageCriterion::ALL.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Nft,
    Collection,
}

/// Loads `--graph` or builds the configured graph. The catalog is loaded
/// whenever metadata and transactions are configured.
fn graph_source(run: &mut Run) -> Result<(Digraph, Option<AssetCatalog>)> {
    let catalog = if run.config.metadata.is_some() && run.config.transactions.is_some() {
        Some(load_catalog_from(run)?)
    } else {
        None
    };
    if let Some(g) = run.config.graph.clone() {
        run.input(&g);
        let nodes = run.config.nodes.clone();
        if let Some(n) = &nodes {
            run.input(n);
        }
        return Ok((load_edge_list(&g, nodes.as_deref())?, catalog));
    }
    let level = match run.config.level.get_or_insert_with(|| "nft".into()).to_ascii_lowercase().as_str() {
        "nft" | "asset" => Level::Nft,
        "collection" => Level::Collection,
        other => return Err(Error::Config(format!("unknown level `{other}` (expected nft or collection)"))),
    };
    let catalog = catalog.ok_or_else(|| missing("metadata"))?;
    let store = load_store_from(run)?;
    let window = run.config.window()?;
    let opts = build_options(&mut run.config);
    let graph = match level {
        Level::Nft => Digraph::from_view(&build_nft_graph_with(&catalog, &store, window, &opts)?),
        Level::Collection => {
            let crit: LinkageCriterion = run.config.criterion.get_or_insert_with(|| "avg".into()).parse()?;
            let g = build_all_criteria(&catalog, &store, window, &[crit], &opts)?
                .pop()
                .expect("one criterion");
            Digraph::from_view(&g)
        }
    };
    Ok((graph, Some(catalog)))
}

fn edge_format(cfg: &mut RunConfig) -> Result<EdgeListFormat> {
    cfg.format.get_or_insert_with(|| "tsv".into()).parse()
}

fn table_format(cfg: &mut RunConfig) -> Result<bool> {
    match cfg.format.get_or_insert_with(|| "json".into()).to_ascii_lowercase().as_str() {
        "json" => Ok(false),
        "csv" => Ok(true),
        other => Err(Error::Config(format!("unsupported format `{other}` (expected json or csv)"))),
    }
}

// ---- subcommands ---------------------------------------------------------

fn cmd_build_graph(run: &mut Run) -> Result<i32> {
    let catalog = load_catalog_from(run)?;
    let store = load_store_from(run)?;
    let window = run.config.window()?;
    let format = edge_format(&mut run.config)?;
    let opts = build_options(&mut run.config);
    let g = build_nft_graph_with(&catalog, &store, window, &opts)?;
    let ext = if format == EdgeListFormat::Dot { "dot" } else { "tsv" };
    run.write_text(&format!("nft_graph.{ext}"), &render_edge_list(&g, format))?;
    run.write_text("nft_graph.nodes.txt", &render_node_list(&g))?;
    run.write_json("nft_graph.report.json", &g.report())?;
    log::info!("built NFT graph: {} nodes, {} edges", g.node_count(), g.edge_count());
    Ok(EXIT_OK)
}

fn cmd_build_collections(run: &mut Run) -> Result<i32> {
    let catalog = load_catalog_from(run)?;
    let store = load_store_from(run)?;
    let window = run.config.window()?;
    let format = edge_format(&mut run.config)?;
    let criteria = parse_criteria(run.config.criterion.get_or_insert_with(|| "all".into()))?;
    let opts = build_options(&mut run.config);
    let graphs = build_all_criteria(&catalog, &store, window, &criteria, &opts)?;
    let ext = if format == EdgeListFormat::Dot { "dot" } else { "tsv" };
    for g in &graphs {
        let c = g.criterion.as_str();
        run.write_text(&format!("collection_graph.{c}.{ext}"), &render_edge_list(g, format))?;
        run.write_text(&format!("collection_graph.{c}.nodes.txt"), &render_node_list(g))?;
        run.write_json(&format!("collection_graph.{c}.report.json"), &g.report())?;
    }
    Ok(EXIT_OK)
}

fn cmd_stats(run: &mut Run) -> Result<i32> {
    let csv = table_format(&mut run.config)?;
    let (g, _) = graph_source(run)?;
    let seed = run.config.seed();
    let opts = StatsOptions {
        assortativity: *run.config.assortativity.get_or_insert_with(Default::default),
        paths: *run.config.paths.get_or_insert_with(Default::default),
        seed,
        ..StatsOptions::default()
    };
    let stats = structural_summary_with(&g, &opts)?;
    if csv {
        let mut out = String::from("metric,value\n");
        // serde_json keeps struct field order only when serialising directly
        let text = serde_json::to_string(&stats)?;
        let ordered: indexless::Ordered = serde_json::from_str(&text)?;
        for (k, v) in ordered.0 {
            let cell = match v {
                Value::Null => String::new(),
                Value::String(s) => s,
                other => other.to_string(),
            };
            out.push_str(&format!("{k},{cell}\n"));
        }
        run.write_text("stats.csv", &out)?;
    } else {
        run.write_json("stats.json", &stats)?;
    }
    Ok(EXIT_OK)
}

/// Field-order-preserving view of a JSON object, for CSV rendering.
mod indexless {
    use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};
    use serde_json::Value;

    pub struct Ordered(pub Vec<(String, Value)>);

    impl<'de> Deserialize<'de> for Ordered {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl<'de> Visitor<'de> for V {
                type Value = Ordered;
                fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                    f.write_str("a JSON object")
                }
                fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Ordered, A::Error> {
                    let mut out = Vec::new();
                    while let Some((k, v)) = m.next_entry::<String, Value>()? {
                        out.push((k, v));
                    }
                    Ok(Ordered(out))
                }
            }
            d.deserialize_map(V)
        }
    }
}

fn cmd_powerlaw(run: &mut Run) -> Result<i32> {
    let (g, _) = graph_source(run)?;
    let degrees: Vec<&str> = match run.config.degree.get_or_insert_with(|| "both".into()).as_str() {
        "in" => vec!["in"],
        "out" => vec!["out"],
        "both" => vec!["in", "out"],
        other => return Err(Error::Config(format!("unknown degree `{other}` (expected in, out or both)"))),
    };
    let opts = PowerLawOptions {
        bootstraps: *run.config.bootstraps.get_or_insert(1000),
        seed: run.config.seed(),
        min_tail: *run.config.min_tail.get_or_insert(10),
        ..PowerLawOptions::default()
    };
    let workers = run.config.workers;
    let mut fits = Map::new();
    for d in degrees {
        let data = if d == "in" { g.in_degrees() } else { g.out_degrees() };
        let fit = crate::similarity::with_workers(workers, || fit_power_law(&data, &opts))?;
        let mut scan = String::from("x_min,alpha,ks,n_tail\n");
        for p in &fit.scan {
            scan.push_str(&format!("{},{},{},{}\n", p.x_min, p.alpha, p.ks, p.n_tail));
        }
        run.write_text(&format!("powerlaw.{d}.scan.csv"), &scan)?;
        let mut v = serde_json::to_value(&fit)?;
        if let Value::Object(m) = &mut v {
            m.remove("scan");
        }
        fits.insert(format!("{d}_degree"), v);
    }
    run.write_json("powerlaw.json", &Value::Object(fits))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CommunitySummary {
    community_count: usize,
    modularity: f64,
    sizes: Vec<usize>,
    louvain_seed: Option<u64>,
}

fn cmd_communities(run: &mut Run) -> Result<i32> {
    let (g, _) = graph_source(run)?;
    let p = louvain_communities(&g, run.config.louvain_seed);
    let mut sizes = vec![0usize; p.community_count];
    let mut tsv = String::from("node\tcommunity\n");
    for (i, &c) in p.assignment.iter().enumerate() {
        sizes[c] += 1;
        tsv.push_str(&format!("{}\t{}\n", g.node_label(i), c));
    }
    run.write_text("communities.tsv", &tsv)?;
    run.write_json(
        "communities.json",
        &CommunitySummary {
            community_count: p.community_count,
            modularity: p.modularity,
            sizes,
            louvain_seed: run.config.louvain_seed,
        },
    )?;
    Ok(EXIT_OK)
}

fn cmd_market(run: &mut Run) -> Result<i32> {
    let (g, catalog) = graph_source(run)?;
    let catalog = catalog.ok_or_else(|| missing("transactions"))?;
    let roles = classify_roles(&g);
    let pooling = *run.config.pooling.get_or_insert_with(Default::default);
    let report = financial_dichotomy(&catalog, &roles, pooling)?;
    run.write_text("market.csv", &report.to_csv())?;
    run.write_json("market.json", &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SeriesSummary {
    kind: SeriesKind,
    file: String,
    buckets: usize,
    missing: Vec<String>,
}

fn cmd_series(run: &mut Run) -> Result<i32> {
    let catalog = load_catalog_from(run)?;
    let explicit = run.config.kinds.is_some();
    let kinds: Vec<SeriesKind> = match &run.config.kinds {
        Some(ks) => ks.iter().map(|k| k.parse()).collect::<Result<_>>()?,
        None => {
            let mut ks = vec![SeriesKind::AvgMeanSellingPrice, SeriesKind::FirstSoldCount, SeriesKind::CollectionsWithFirstSoldCount];
            if run.config.embeddings.is_some() && run.config.ids.is_some() {
                ks.insert(0, SeriesKind::AvgPairwiseSimilarity);
            }
            if run.config.btc_csv.is_some() {
                ks.push(SeriesKind::BtcClose);
            }
            ks
        }
    };
    if !explicit {
        run.config.kinds = Some(kinds.iter().map(|k| k.as_str().to_string()).collect());
    }
    let store = if kinds.contains(&SeriesKind::AvgPairwiseSimilarity) {
        Some(load_store_from(run)?)
    } else {
        None
    };
    let btc = if kinds.contains(&SeriesKind::BtcClose) {
        let p = run.required_input(run.config.btc_csv.clone(), "btc_csv")?;
        Some(load_btc_csv(&p)?)
    } else {
        None
    };
    let similarity = match run.config.similarity_mode.get_or_insert_with(|| "all-pairs".into()).as_str() {
        "all-pairs" => SimilarityMode::AllPairs,
        "edges-only" => SimilarityMode::EdgesOnly {
            threshold: run.config.threshold(),
        },
        other => return Err(Error::Config(format!("unknown similarity mode `{other}`"))),
    };
    let opts = SeriesOptions {
        sampling: *run.config.sampling.get_or_insert(Sampling::Monthly),
        window: run.config.window()?,
        similarity,
        scope: *run.config.scope.get_or_insert_with(Default::default),
        exact_limit: *run.config.exact_limit.get_or_insert(20_000),
        pair_cap: *run.config.pair_cap.get_or_insert(5_000_000),
        seed: run.config.seed(),
        forward_fill: *run.config.forward_fill.get_or_insert(false),
    };
    let workers = run.config.workers;
    let mut summary = Vec::new();
    for kind in kinds {
        let s = crate::similarity::with_workers(workers, || {
            build_series(kind, &catalog, store.as_ref(), btc.as_ref(), &opts)
        })?;
        let file = format!("series.{}.csv", kind.as_str());
        run.write_text(&file, &s.to_csv())?;
        summary.push(SeriesSummary {
            kind,
            file,
            buckets: s.len(),
            missing: s.missing_buckets().into_iter().map(crate::timeseries::format_date).collect(),
        });
    }
    run.write_json("series.json", &serde_json::json!({ "sampling": opts.sampling, "series": summary }))?;
    Ok(EXIT_OK)
}

fn cmd_tlcc(run: &mut Run) -> Result<i32> {
    let a = run.required_input(run.config.series_a.clone(), "series_a")?;
    let b = run.required_input(run.config.series_b.clone(), "series_b")?;
    let sa = read_series_csv(&a)?;
    let sb = read_series_csv(&b)?;
    let (starts, va, vb) = align(&sa, &sb)?;
    let max_lag = *run.config.tlcc_max_lag.get_or_insert(sa.sampling.buckets_per_year());
    if run.config.sampling.is_none() {
        run.config.sampling = Some(sa.sampling);
    }
    let result = tlcc(&va, &vb, max_lag)?;
    run.write_text("tlcc.csv", &result.to_csv())?;
    run.write_json(
        "tlcc.json",
        &serde_json::json!({
            "sampling": sa.sampling,
            "buckets": starts.len(),
            "max_lag": max_lag,
            "peak_lag": result.peak_lag,
            "peak_r": result.peak_r,
        }),
    )?;
    if result.only_lag_zero() {
        log::warn!(
            "every nonzero lag has fewer than 3 overlapping samples or zero variance; only lag 0 is defined"
        );
        return Ok(EXIT_DATA);
    }
    Ok(EXIT_OK)
}

fn cmd_explain(run: &mut Run) -> Result<i32> {
    let pair_id = run.config.pair_id.get_or_insert_with(|| "pair".into()).clone();
    let cfg = ShapleyConfig {
        samples: *run.config.samples.get_or_insert(10_000),
        seed: run.config.seed(),
        max_oracle_calls: run.config.max_oracle_calls,
        ..ShapleyConfig::default()
    };
    let px = *run.config.heatmap_px.get_or_insert(16);
    let use_toy = run.config.toy.unwrap_or(false);
    let (map, grid) = if use_toy {
        let d = FeatureGrid::default();
        let grid = FeatureGrid::new(
            *run.config.width.get_or_insert(d.image_width),
            *run.config.height.get_or_insert(d.image_height),
            *run.config.cell.get_or_insert(d.cell),
        )?;
        let mut oracle = toy::weighted(toy::ramp_weights(grid.feature_count()));
        (explain_pair(&mut oracle, &pair_id, grid, &cfg)?, grid)
    } else {
        let cmd = run
            .config
            .oracle_command
            .clone()
            .ok_or_else(|| Error::Config("set --oracle-command or --toy".into()))?;
        let timeout = Duration::from_secs(*run.config.oracle_timeout_secs.get_or_insert(30));
        let (mut oracle, grid) = ProcessOracle::spawn(&cmd, &pair_id, timeout)?;
        let map = explain_pair(&mut oracle, &pair_id, grid, &cfg)?;
        oracle.close()?;
        (map, grid)
    };
    run.write_json("explain.json", &map)?;
    run.write_text("heatmap.csv", &heatmap_csv(&map, &grid)?)?;
    let png = run.out_dir.join("heatmap.png");
    write_heatmap_png(&map, &grid, px, &png)?;
    run.record_file("heatmap.png")?;
    Ok(EXIT_OK)
}

fn cmd_toy_oracle(a: &ToyOracleArgs) -> i32 {
    let grid = match FeatureGrid::new(a.width, a.height, a.cell) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("vinet toy-oracle: {e}");
            return EXIT_USAGE;
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    match serve_toy_protocol(grid, stdin.lock(), stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("vinet toy-oracle: {e}");
            EXIT_ORACLE
        }
    }
}

fn dispatch(command: &Command, config: Option<&Path>) -> Result<i32> {
    let cfg = resolve_config(config, command.flags()?)?;
    if let Some(t) = cfg.threshold {
        crate::nft_graph::check_threshold(t)?;
    }
    let mut run = Run::new(command.name(), cfg)?;
    run.config.seed();
    let code = match command {
        Command::BuildGraph(_) => cmd_build_graph(&mut run)?,
        Command::BuildCollections(_) => cmd_build_collections(&mut run)?,
        Command::Stats(_) => cmd_stats(&mut run)?,
        Command::Powerlaw(_) => cmd_powerlaw(&mut run)?,
        Command::Communities(_) => cmd_communities(&mut run)?,
        Command::Market(_) => cmd_market(&mut run)?,
        Command::Series(_) => cmd_series(&mut run)?,
        Command::Tlcc(_) => cmd_tlcc(&mut run)?,
        Command::Explain(_) => cmd_explain(&mut run)?,
        Command::ToyOracle(_) => unreachable!("handled before dispatch"),
    };
    run.finish()?;
    Ok(code)
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Command::ToyOracle(a) = &cli.command {
        return cmd_toy_oracle(a);
    }
    match dispatch(&cli.command, cli.config.as_deref()) {
        Ok(code) => code,
        Err(e) => {
            let category = match e.category() {
                ErrorCategory::Config => "config",
                ErrorCategory::Io => "io",
                ErrorCategory::Data => "data",
                ErrorCategory::Oracle => "oracle",
            };
            let _ = writeln!(std::io::stderr(), "vinet {}: {category} error: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_specs() {
        assert_eq!("1609459200".parse::<TimeSpec>().unwrap().resolve(false).unwrap(), 1_609_459_200);
        let d: TimeSpec = "2021-01-01".parse().unwrap();
        assert_eq!(d.resolve(false).unwrap(), 1_609_459_200);
        assert_eq!(d.resolve(true).unwrap(), 1_609_459_200 + 86_399);
        let r: TimeSpec = "2021-01-01T01:00:00Z".parse().unwrap();
        assert_eq!(r.resolve(true).unwrap(), 1_609_462_800);
        assert!("soon".parse::<TimeSpec>().unwrap().resolve(false).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "threshold = 0.7\nseed = 5\nwindow_start = \"2021-01-01\"\n").unwrap();
        let flags = serde_json::json!({"threshold": 0.9, "seed": null});
        let cfg = resolve_config(Some(&p), flags).unwrap();
        assert_eq!(cfg.threshold, Some(0.9));
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.window_start, Some(TimeSpec::Text("2021-01-01".into())));
        std::fs::write(&p, "treshold = 0.7\n").unwrap();
        let err = resolve_config(Some(&p), Value::Object(Map::new())).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run_cli(["vinet", "frobnicate"]), EXIT_USAGE);
    }
}
