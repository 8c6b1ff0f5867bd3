//! Calendar-bucketed market and similarity time series.
//!
//! Buckets are ISO weeks (starting Monday 00:00 UTC) or calendar months (UTC).
//! Missing samples are `None` and stay missing unless explicitly filled.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssetCatalog, EmbeddingStore, TimeWindow, Timestamp};
use crate::nft_graph::{time_order, windowed_assets};
use crate::similarity::PackedRows;

const WEEK: i64 = 7 * 86_400;
/// 1970-01-05, the first Monday after the Unix epoch.
const MONDAY_EPOCH: i64 = 4 * 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Weekly,
    Monthly,
}

impl Sampling {
    /// Buckets in one year; the default maximum TLCC lag.
    pub fn buckets_per_year(self) -> usize {
        match self {
            Sampling::Weekly => 52,
            Sampling::Monthly => 12,
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Weekly => "weekly",
            Sampling::Monthly => "monthly",
        })
    }
}

impl FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weekly" | "week" | "w" => Ok(Sampling::Weekly),
            "monthly" | "month" | "m" => Ok(Sampling::Monthly),
            _ => Err(Error::Config(format!(
                "unknown sampling '{s}' (expected weekly or monthly)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// (i) cumulative mean cosine over admissible ordered pairs.
    AvgPairwiseSimilarity,
    /// (ii) cumulative mean over assets of their mean selling price.
    AvgMeanSellingPrice,
    /// (iii) last BTC close within the bucket.
    BtcClose,
    /// (iv) assets first sold within the bucket.
    FirstSoldCount,
    /// (v) collections with at least one asset first sold within the bucket.
    CollectionsWithFirstSoldCount,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 5] = [
        SeriesKind::AvgPairwiseSimilarity,
        SeriesKind::AvgMeanSellingPrice,
        SeriesKind::BtcClose,
        SeriesKind::FirstSoldCount,
        SeriesKind::CollectionsWithFirstSoldCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::AvgPairwiseSimilarity => "avg-pairwise-similarity",
            SeriesKind::AvgMeanSellingPrice => "avg-mean-selling-price",
            SeriesKind::BtcClose => "btc-close",
            SeriesKind::FirstSoldCount => "first-sold-count",
            SeriesKind::CollectionsWithFirstSoldCount => "collections-with-first-sold-count",
        }
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "i" | "similarity" => Some(SeriesKind::AvgPairwiseSimilarity),
            "ii" | "price" => Some(SeriesKind::AvgMeanSellingPrice),
            "iii" | "btc" => Some(SeriesKind::BtcClose),
            "iv" | "first-sold" => Some(SeriesKind::FirstSoldCount),
            "v" | "collections" => Some(SeriesKind::CollectionsWithFirstSoldCount),
            _ => None,
        };
        alias
            .or_else(|| SeriesKind::ALL.into_iter().find(|k| k.as_str() == norm))
            .ok_or_else(|| Error::Config(format!("unknown series kind '{s}'")))
    }
}

/// Which pairs feed the similarity series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMode {
    /// Every admissible pair, whatever its similarity.
    #[default]
    AllPairs,
    /// Only admissible pairs at or above the threshold, i.e. graph edges.
    EdgesOnly { threshold: f64 },
}

/// Category restriction for the similarity series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairScope {
    #[default]
    All,
    WithinCategory,
    AcrossCategory,
}

impl FromStr for PairScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "all" => Ok(PairScope::All),
            "within" | "within-category" => Ok(PairScope::WithinCategory),
            "across" | "across-category" => Ok(PairScope::AcrossCategory),
            _ => Err(Error::Config(format!(
                "unknown pair scope '{s}' (expected all, within or across)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub sampling: Sampling,
    pub window: TimeWindow,
    pub similarity: SimilarityMode,
    pub scope: PairScope,
    /// Below this many assets the similarity series is computed exactly.
    pub exact_limit: usize,
    /// Uniform pair draws used above `exact_limit`.
    pub pair_cap: usize,
    pub seed: u64,
    /// Fill BTC gaps with the previous close instead of leaving them missing.
    pub forward_fill: bool,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            sampling: Sampling::Monthly,
            window: TimeWindow::unbounded(),
            similarity: SimilarityMode::AllPairs,
            scope: PairScope::All,
            exact_limit: 20_000,
            pair_cap: 5_000_000,
            seed: 0,
            forward_fill: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub kind: Option<SeriesKind>,
    pub sampling: Sampling,
    /// Bucket start per sample, consecutive calendar buckets.
    pub starts: Vec<Timestamp>,
    pub values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn origin(&self) -> Option<Timestamp> {
        self.starts.first().copied()
    }

    /// Bucket starts whose sample is missing.
    pub fn missing_buckets(&self) -> Vec<Timestamp> {
        self.starts
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_none())
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_start,value\n");
        for (s, v) in self.starts.iter().zip(&self.values) {
            out.push_str(&format_date(*s));
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Start of the bucket containing `ts`.
pub fn bucket_start(ts: Timestamp, sampling: Sampling) -> Timestamp {
    match sampling {
        Sampling::Weekly => (ts - MONDAY_EPOCH).div_euclid(WEEK) * WEEK + MONDAY_EPOCH,
        Sampling::Monthly => {
            let dt = datetime(ts);
            month_start(dt.year(), dt.month())
        }
    }
}

/// Start of the bucket after the one starting at `start`.
pub fn next_bucket(start: Timestamp, sampling: Sampling) -> Timestamp {
    match sampling {
        Sampling::Weekly => start + WEEK,
        Sampling::Monthly => {
            let dt = datetime(start);
            if dt.month() == 12 {
                month_start(dt.year() + 1, 1)
            } else {
                month_start(dt.year(), dt.month() + 1)
            }
        }
    }
}

fn datetime(ts: Timestamp) -> DateTime<Utc> {
    Utc.timestamp_opt(ts, 0).single().expect("timestamp in chrono range")
}

fn month_start(year: i32, month: u32) -> Timestamp {
    NaiveDate::from_ymd_opt(year, month, 1)
        .expect("valid month")
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
        .timestamp()
}

pub fn format_date(ts: Timestamp) -> String {
    datetime(ts).format("%Y-%m-%d").to_string()
}

/// Parses `YYYY-MM-DD` (an optional time part is ignored) to midnight UTC.
pub fn parse_date(s: &str) -> Option<Timestamp> {
    let day = s.trim().get(..10)?;
    let d = NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()?;
    Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp())
}

/// Bucket starts covering `[lo, hi]`.
pub fn bucket_range(lo: Timestamp, hi: Timestamp, sampling: Sampling) -> Vec<Timestamp> {
    let mut out = Vec::new();
    let mut s = bucket_start(lo, sampling);
    while s <= hi {
        out.push(s);
        s = next_bucket(s, sampling);
    }
    out
}

/// Bucket starts for `window`, falling back to the data extent for unbounded sides.
fn buckets_for(window: &TimeWindow, data: impl Iterator<Item = Timestamp>, sampling: Sampling) -> Vec<Timestamp> {
    let (mut lo, mut hi) = (Timestamp::MAX, Timestamp::MIN);
    for t in data.filter(|&t| window.contains(t)) {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if window.t_start != Timestamp::MIN {
        lo = window.t_start;
    }
    if window.t_end != Timestamp::MAX {
        hi = window.t_end;
    }
    if lo > hi {
        return Vec::new();
    }
    bucket_range(lo, hi, sampling)
}

/// Index of the bucket containing `ts`, given sorted bucket starts.
fn bucket_index(starts: &[Timestamp], ts: Timestamp) -> Option<usize> {
    let k = starts.partition_point(|&s| s <= ts);
    (k > 0).then(|| k - 1)
}

/// Daily BTC closes, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct BtcPrices {
    pub points: Vec<(Timestamp, f64)>,
}

#[derive(Debug, Deserialize)]
struct BtcRow {
    #[serde(rename = "Date")]
    date: String,
    #[serde(rename = "Close")]
    close: String,
}

pub fn load_btc_csv(path: &Path) -> Result<BtcPrices> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut points = Vec::new();
    for raw in reader.records() {
        let raw = raw.map_err(|e| csv_error(path, e))?;
        let line = raw.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec: BtcRow = raw.deserialize(Some(&headers)).map_err(|e| bad(e.to_string()))?;
        let ts = parse_date(&rec.date).ok_or_else(|| bad(format!("bad date '{}'", rec.date)))?;
        // finance exports write "null" for non-trading days
        if rec.close.is_empty() || rec.close.eq_ignore_ascii_case("null") {
            continue;
        }
        let close: f64 = rec
            .close
            .parse()
            .map_err(|_| bad(format!("bad close '{}'", rec.close)))?;
        points.push((ts, close));
    }
    points.sort_by_key(|p| p.0);
    Ok(BtcPrices { points })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a `bucket_start,value` CSV; the sampling is inferred from the date spacing.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series_csv(&text, path)
}

pub fn parse_series_csv(text: &str, path: &Path) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "bucket_start,value" => {}
        _ => {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header 'bucket_start,value'".into(),
            })
        }
    }
    let mut starts = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        let (d, v) = line
            .split_once(',')
            .ok_or_else(|| bad("expected two columns".into()))?;
        starts.push(parse_date(d).ok_or_else(|| bad(format!("bad date '{d}'")))?);
        let v = v.trim();
        values.push(if v.is_empty() {
            None
        } else {
            Some(v.parse::<f64>().map_err(|_| bad(format!("bad value '{v}'")))?)
        });
    }
    let sampling = infer_sampling(&starts).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{}: dates are not consecutive weekly or monthly buckets",
            path.display()
        ))
    })?;
    Ok(TimeSeries {
        kind: None,
        sampling,
        starts,
        values,
    })
}

/// Weekly or monthly when `starts` are consecutive buckets of that sampling.
/// A single bucket is read as monthly if it falls on the first of a month.
pub fn infer_sampling(starts: &[Timestamp]) -> Option<Sampling> {
    let first = *starts.first()?;
    [Sampling::Monthly, Sampling::Weekly].into_iter().find(|&s| {
        bucket_start(first, s) == first
            && starts.windows(2).all(|w| next_bucket(w[0], s) == w[1])
    })
}

fn in_window_assets<'a>(
    catalog: &'a AssetCatalog,
    window: &'a TimeWindow,
) -> impl Iterator<Item = &'a crate::model::AssetRecord> + 'a {
    catalog.assets().filter(move |a| window.contains(a.first_sale_ts))
}

fn count_series(catalog: &AssetCatalog, opts: &SeriesOptions, distinct_collections: bool) -> TimeSeries {
    let starts = buckets_for(
        &opts.window,
        catalog.assets().map(|a| a.first_sale_ts),
        opts.sampling,
    );
    let mut counts = vec![0usize; starts.len()];
    let mut seen: Vec<std::collections::BTreeSet<&str>> = vec![Default::default(); starts.len()];
    for a in in_window_assets(catalog, &opts.window) {
        if let Some(b) = bucket_index(&starts, a.first_sale_ts) {
            if distinct_collections {
                seen[b].insert(&a.collection_id);
            } else {
                counts[b] += 1;
            }
        }
    }
    let values = if distinct_collections {
        seen.iter().map(|s| Some(s.len() as f64)).collect()
    } else {
        counts.iter().map(|&c| Some(c as f64)).collect()
    };
    TimeSeries {
        kind: Some(if distinct_collections {
            SeriesKind::CollectionsWithFirstSoldCount
        } else {
            SeriesKind::FirstSoldCount
        }),
        sampling: opts.sampling,
        starts,
        values,
    }
}

fn price_series(catalog: &AssetCatalog, opts: &SeriesOptions) -> TimeSeries {
    let starts = buckets_for(
        &opts.window,
        catalog.assets().map(|a| a.first_sale_ts),
        opts.sampling,
    );
    let members: std::collections::HashMap<&str, usize> = in_window_assets(catalog, &opts.window)
        .enumerate()
        .map(|(k, a)| (a.asset_id.as_str(), k))
        .collect();
    let mut sum = vec![0.0f64; members.len()];
    let mut count = vec![0usize; members.len()];
    let mut mean_total = 0.0f64;
    let mut active = 0usize;
    let txs = catalog.transactions();
    let mut next_tx = 0;
    let mut values = Vec::with_capacity(starts.len());
    for (b, &s) in starts.iter().enumerate() {
        let end = starts
            .get(b + 1)
            .copied()
            .unwrap_or_else(|| next_bucket(s, opts.sampling));
        while next_tx < txs.len() && txs[next_tx].ts < end {
            let t = &txs[next_tx];
            next_tx += 1;
            let Some(&k) = members.get(t.asset_id.as_str()) else {
                continue;
            };
            if count[k] == 0 {
                active += 1;
            } else {
                mean_total -= sum[k] / count[k] as f64;
            }
            sum[k] += t.price_usd;
            count[k] += 1;
            mean_total += sum[k] / count[k] as f64;
        }
        values.push((active > 0).then(|| mean_total / active as f64));
    }
    TimeSeries {
        kind: Some(SeriesKind::AvgMeanSellingPrice),
        sampling: opts.sampling,
        starts,
        values,
    }
}

/// BTC close series; gaps stay missing unless `opts.forward_fill` is set.
pub fn btc_series(btc: &BtcPrices, opts: &SeriesOptions) -> TimeSeries {
    let starts = buckets_for(&opts.window, btc.points.iter().map(|p| p.0), opts.sampling);
    let mut values: Vec<Option<f64>> = vec![None; starts.len()];
    for &(ts, close) in &btc.points {
        if !opts.window.contains(ts) {
            continue;
        }
        if let Some(b) = bucket_index(&starts, ts) {
            // points are sorted, so the last write is the last close of the bucket
            values[b] = Some(close);
        }
    }
    let gaps = values.iter().filter(|v| v.is_none()).count();
    if gaps > 0 {
        log::warn!(
            "BTC series has {gaps} bucket(s) without a close{}",
            if opts.forward_fill { "; forward-filling" } else { "" }
        );
    }
    if opts.forward_fill {
        let mut last = None;
        for v in values.iter_mut() {
            match v {
                Some(x) => last = Some(*x),
                None => *v = last,
            }
        }
    }
    TimeSeries {
        kind: Some(SeriesKind::BtcClose),
        sampling: opts.sampling,
        starts,
        values,
    }
}

fn similarity_series(
    catalog: &AssetCatalog,
    store: &EmbeddingStore,
    opts: &SeriesOptions,
) -> Result<TimeSeries> {
    let assets = windowed_assets(catalog, store, &opts.window);
    let starts = buckets_for(&opts.window, assets.ts.iter().copied(), opts.sampling);
    let (order, earlier) = time_order(&assets.ts);
    // everything below is indexed by time-sorted position
    let rows: Vec<usize> = order.iter().map(|&i| assets.rows[i]).collect();
    let labels: Vec<&str> = order.iter().map(|&i| assets.ids[i]).collect();
    let ts: Vec<Timestamp> = order.iter().map(|&i| assets.ts[i]).collect();
    let coll: Vec<&str> = order.iter().map(|&i| assets.collections[i]).collect();
    let cat: Vec<_> = labels
        .iter()
        .map(|id| catalog.get(id).expect("windowed asset is in catalog").category)
        .collect();
    let packed = PackedRows::gather(store, &rows, &labels)?;

    let admissible = |p: usize, q: usize| {
        coll[p] != coll[q]
            && match opts.scope {
                PairScope::All => true,
                PairScope::WithinCategory => cat[p] == cat[q],
                PairScope::AcrossCategory => cat[p] != cat[q],
            }
    };
    let counts = |s: f64| match opts.similarity {
        SimilarityMode::AllPairs => true,
        SimilarityMode::EdgesOnly { threshold } => s >= threshold,
    };

    let n = ts.len();
    // (sum, count) of pair similarities attributed to the later asset's position
    let mut per_pos: Vec<(f64, u64)> = vec![(0.0, 0); n];
    if n < opts.exact_limit {
        per_pos.par_iter_mut().enumerate().for_each(|(p, slot)| {
            let mut acc = (0.0f64, 0u64);
            packed.for_each_tile(&[p], 0..earlier[p], admissible, |_, _, s| {
                if counts(s) {
                    acc.0 += s;
                    acc.1 += 1;
                }
            });
            *slot = acc;
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.pair_cap {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let (p, q) = if ts[a] > ts[b] { (a, b) } else { (b, a) };
            if ts[p] == ts[q] || !admissible(p, q) {
                continue;
            }
            let s = packed.cosine(p, q);
            if counts(s) {
                per_pos[p].0 += s;
                per_pos[p].1 += 1;
            }
        }
    }

    let mut values = Vec::with_capacity(starts.len());
    let (mut sum, mut cnt) = (0.0f64, 0u64);
    let mut p = 0;
    for (b, &s) in starts.iter().enumerate() {
        let end = starts
            .get(b + 1)
            .copied()
            .unwrap_or_else(|| next_bucket(s, opts.sampling));
        while p < n && ts[p] < end {
            sum += per_pos[p].0;
            cnt += per_pos[p].1;
            p += 1;
        }
        values.push((cnt > 0).then(|| sum / cnt as f64));
    }
    Ok(TimeSeries {
        kind: Some(SeriesKind::AvgPairwiseSimilarity),
        sampling: opts.sampling,
        starts,
        values,
    })
}

/// Builds one series. `store` is required for the similarity series and `btc`
/// for the BTC series.
pub fn build_series(
    kind: SeriesKind,
    catalog: &AssetCatalog,
    store: Option<&EmbeddingStore>,
    btc: Option<&BtcPrices>,
    opts: &SeriesOptions,
) -> Result<TimeSeries> {
    match kind {
        SeriesKind::AvgPairwiseSimilarity => {
            let store = store.ok_or_else(|| {
                Error::InvalidArgument("the similarity series needs embeddings".into())
            })?;
            similarity_series(catalog, store, opts)
        }
        SeriesKind::AvgMeanSellingPrice => Ok(price_series(catalog, opts)),
        SeriesKind::BtcClose => {
            let btc = btc
                .ok_or_else(|| Error::InvalidArgument("the BTC series needs a price CSV".into()))?;
            Ok(btc_series(btc, opts))
        }
        SeriesKind::FirstSoldCount => Ok(count_series(catalog, opts, false)),
        SeriesKind::CollectionsWithFirstSoldCount => Ok(count_series(catalog, opts, true)),
    }
}
