//! Domain types, file ingestion and the cosine similarity primitive.
//!
//! Timestamps are unix epoch seconds (UTC) throughout the crate.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Art,
    Collectible,
    Games,
    Metaverse,
    Utility,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Art,
        Category::Collectible,
        Category::Games,
        Category::Metaverse,
        Category::Utility,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Art => "Art",
            Category::Collectible => "Collectible",
            Category::Games => "Games",
            Category::Metaverse => "Metaverse",
            Category::Utility => "Utility",
            Category::Other => "Other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset_id: String,
    pub collection_id: String,
    pub category: Category,
    pub first_sale_ts: Timestamp,
    pub embedding_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub asset_id: String,
    pub ts: Timestamp,
    pub price_usd: f64,
}

/// Closed observation interval `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

impl TimeWindow {
    pub fn new(t_start: Timestamp, t_end: Timestamp) -> Result<Self> {
        if t_start >= t_end {
            return Err(Error::InvalidWindow {
                start: t_start,
                end: t_end,
            });
        }
        Ok(TimeWindow { t_start, t_end })
    }

    /// Window spanning every representable timestamp.
    pub fn unbounded() -> Self {
        TimeWindow {
            t_start: Timestamp::MIN,
            t_end: Timestamp::MAX,
        }
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.t_start && ts <= self.t_end
    }

    pub fn is_subset_of(&self, other: &TimeWindow) -> bool {
        other.t_start <= self.t_start && self.t_end <= other.t_end
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssetCatalog {
    assets: BTreeMap<String, AssetRecord>,
    collections: BTreeMap<String, Vec<String>>,
    transactions: Vec<Transaction>,
}

impl AssetCatalog {
    /// Builds a validated catalog. Transactions are stably sorted by timestamp.
    pub fn new(records: Vec<AssetRecord>, mut transactions: Vec<Transaction>) -> Result<Self> {
        let mut assets = BTreeMap::new();
        for rec in records {
            if rec.first_sale_ts <= 0 {
                return Err(Error::InvalidArgument(format!(
                    "asset `{}` has non-positive first_sale_ts {}",
                    rec.asset_id, rec.first_sale_ts
                )));
            }
            if assets.contains_key(&rec.asset_id) {
                return Err(Error::DuplicateAsset(rec.asset_id));
            }
            assets.insert(rec.asset_id.clone(), rec);
        }
        for (i, tx) in transactions.iter().enumerate() {
            if !assets.contains_key(&tx.asset_id) {
                return Err(Error::UnknownAsset {
                    asset_id: tx.asset_id.clone(),
                    line: i as u64 + 1,
                });
            }
            if !(tx.price_usd >= 0.0 && tx.price_usd.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "transaction {} of `{}` has invalid price {}",
                    i + 1,
                    tx.asset_id,
                    tx.price_usd
                )));
            }
        }
        transactions.sort_by_key(|t| t.ts);

        let mut collections: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for rec in assets.values() {
            collections
                .entry(rec.collection_id.clone())
                .or_default()
                .push(rec.asset_id.clone());
        }
        Ok(AssetCatalog {
            assets,
            collections,
            transactions,
        })
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.assets.get(asset_id)
    }

    /// Assets in ascending id order.
    pub fn assets(&self) -> impl Iterator<Item = &AssetRecord> {
        self.assets.values()
    }

    pub fn collections(&self) -> &BTreeMap<String, Vec<String>> {
        &self.collections
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    /// Transactions grouped per asset, in timestamp order.
    pub fn transactions_by_asset(&self) -> HashMap<&str, Vec<&Transaction>> {
        let mut out: HashMap<&str, Vec<&Transaction>> = HashMap::new();
        for tx in &self.transactions {
            out.entry(tx.asset_id.as_str()).or_default().push(tx);
        }
        out
    }

    /// Fills `embedding_index` from the store's id mapping; returns how many assets were linked.
    pub fn link_embeddings(&mut self, store: &EmbeddingStore) -> usize {
        let mut linked = 0;
        for rec in self.assets.values_mut() {
            rec.embedding_index = store.row_of(&rec.asset_id);
            linked += rec.embedding_index.is_some() as usize;
        }
        linked
    }
}

const METADATA_COLUMNS: [&str; 3] = ["asset_id", "collection_id", "category"];
const TRANSACTION_COLUMNS: [&str; 3] = ["asset_id", "ts", "price_usd"];

fn tsv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    malformed(path, line, err.to_string())
}

/// Loads the metadata and transaction TSVs into a validated catalog.
///
/// When the metadata `first_sale_ts` column is absent or empty for a row, the
/// earliest transaction timestamp of that asset is used instead. An explicit
/// value that disagrees with the transactions is kept and logged.
pub fn load_catalog(metadata_path: &Path, transactions_path: &Path) -> Result<AssetCatalog> {
    let mut meta = tsv_reader(metadata_path)?;
    let headers = meta
        .headers()
        .map_err(|e| csv_error(metadata_path, e))?
        .clone();
    let mut idx = [0usize; 3];
    for (slot, name) in idx.iter_mut().zip(METADATA_COLUMNS) {
        *slot = column_index(&headers, name)
            .ok_or_else(|| malformed(metadata_path, 1, format!("missing column `{name}`")))?;
    }
    let ts_col = column_index(&headers, "first_sale_ts");

    let mut rows: Vec<(String, String, Category, Option<Timestamp>)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in meta.records() {
        let record = record.map_err(|e| csv_error(metadata_path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let asset_id = record[idx[0]].trim().to_string();
        if asset_id.is_empty() {
            return Err(malformed(metadata_path, line, "empty asset_id"));
        }
        let collection_id = record[idx[1]].trim().to_string();
        if collection_id.is_empty() {
            return Err(malformed(metadata_path, line, "empty collection_id"));
        }
        let category: Category = record[idx[2]]
            .parse()
            .map_err(|m: String| malformed(metadata_path, line, m))?;
        let ts = match ts_col.map(|c| record[c].trim()) {
            None | Some("") => None,
            Some(raw) => Some(raw.parse::<Timestamp>().map_err(|e| {
                malformed(metadata_path, line, format!("bad first_sale_ts `{raw}`: {e}"))
            })?),
        };
        if !seen.insert(asset_id.clone()) {
            return Err(Error::DuplicateAsset(asset_id));
        }
        rows.push((asset_id, collection_id, category, ts));
    }

    let mut tx_reader = tsv_reader(transactions_path)?;
    let tx_headers = tx_reader
        .headers()
        .map_err(|e| csv_error(transactions_path, e))?
        .clone();
    let mut tidx = [0usize; 3];
    for (slot, name) in tidx.iter_mut().zip(TRANSACTION_COLUMNS) {
        *slot = column_index(&tx_headers, name)
            .ok_or_else(|| malformed(transactions_path, 1, format!("missing column `{name}`")))?;
    }
    let mut transactions = Vec::new();
    for record in tx_reader.records() {
        let record = record.map_err(|e| csv_error(transactions_path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let asset_id = record[tidx[0]].trim().to_string();
        if !seen.contains(&asset_id) {
            return Err(Error::UnknownAsset { asset_id, line });
        }
        let ts: Timestamp = record[tidx[1]]
            .trim()
            .parse()
            .map_err(|e| malformed(transactions_path, line, format!("bad ts: {e}")))?;
        let price_usd: f64 = record[tidx[2]]
            .trim()
            .parse()
            .map_err(|e| malformed(transactions_path, line, format!("bad price_usd: {e}")))?;
        if !(price_usd >= 0.0 && price_usd.is_finite()) {
            return Err(malformed(
                transactions_path,
                line,
                format!("price_usd must be a nonnegative number, got {price_usd}"),
            ));
        }
        transactions.push(Transaction {
            asset_id,
            ts,
            price_usd,
        });
    }

    let mut earliest: HashMap<&str, Timestamp> = HashMap::new();
    for tx in &transactions {
        earliest
            .entry(tx.asset_id.as_str())
            .and_modify(|t| *t = (*t).min(tx.ts))
            .or_insert(tx.ts);
    }
    let mut records = Vec::with_capacity(rows.len());
    for (asset_id, collection_id, category, ts) in rows {
        let derived = earliest.get(asset_id.as_str()).copied();
        let first_sale_ts = match (ts, derived) {
            (Some(explicit), Some(d)) => {
                if explicit != d {
                    log::warn!(
                        "asset `{asset_id}`: first_sale_ts {explicit} differs from earliest transaction {d}"
                    );
                }
                explicit
            }
            (Some(explicit), None) => explicit,
            (None, Some(d)) => d,
            (None, None) => return Err(Error::MissingFirstSale(asset_id)),
        };
        records.push(AssetRecord {
            asset_id,
            collection_id,
            category,
            first_sale_ts,
            embedding_index: None,
        });
    }
    AssetCatalog::new(records, transactions)
}

/// Dense row-major matrix of asset embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    n: usize,
    d: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(d: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        let n = ids.len();
        if data.len() != n * d {
            return Err(Error::EmbeddingFormat(format!(
                "matrix has {} values, expected {n}x{d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        let mut index = HashMap::with_capacity(n);
        for (row, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateEmbeddingId(id.clone()));
            }
        }
        Ok(EmbeddingStore {
            n,
            d,
            data,
            ids,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_of(&self, asset_id: &str) -> Option<usize> {
        self.index.get(asset_id).copied()
    }

    pub fn vector(&self, asset_id: &str) -> Option<&[f32]> {
        self.row_of(asset_id).map(|r| self.row(r))
    }
}

const EMBV1_MAGIC: &str = "EMBV1";

/// Reads an EMBV1 matrix and its companion ids file.
pub fn load_embeddings(bin_path: &Path, ids_path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let (n, d, payload) = parse_embv1(&bytes)?;
    let ids_raw = fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
    let ids: Vec<String> = ids_raw
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect();
    if ids.len() != n {
        return Err(Error::IdCountMismatch {
            expected: n,
            found: ids.len(),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingStore::new(d, data, ids)
}

fn parse_embv1(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::EmbeddingFormat("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::EmbeddingFormat("header is not ASCII".into()))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some(EMBV1_MAGIC) {
        return Err(Error::EmbeddingFormat(format!(
            "magic mismatch: expected `{EMBV1_MAGIC}`"
        )));
    }
    let mut dim = |what: &str| -> Result<usize> {
        parts
            .next()
            .ok_or_else(|| Error::EmbeddingFormat(format!("header lacks {what}")))?
            .parse()
            .map_err(|e| Error::EmbeddingFormat(format!("bad {what} in header: {e}")))
    };
    let n = dim("n")?;
    let d = dim("d")?;
    if parts.next().is_some() {
        return Err(Error::EmbeddingFormat("trailing tokens in header".into()));
    }
    let payload = &bytes[newline + 1..];
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::EmbeddingFormat("header dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::EmbeddingFormat(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    Ok((n, d, payload))
}

/// Writes the store as EMBV1 plus ids file.
pub fn write_embeddings(store: &EmbeddingStore, bin_path: &Path, ids_path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + store.data.len() * 4);
    writeln!(buf, "{EMBV1_MAGIC} {} {}", store.n, store.d).expect("vec write");
    for v in &store.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bin_path, buf).map_err(|e| Error::io(bin_path, e))?;
    let mut ids = String::new();
    for id in &store.ids {
        ids.push_str(id);
        ids.push('\n');
    }
    fs::write(ids_path, ids).map_err(|e| Error::io(ids_path, e))
}

/// Euclidean norm with 64-bit accumulation.
#[inline]
pub fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    // Same accumulation order as the blocked kernel.
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x as f64 * y as f64;
    }
    acc
}

/// `dot(a, b) / (|a| |b|)`, accumulated in f64. The raw value is returned
/// without clamping, so it may be negative.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb))
}
