//! Seeded synthetic markets shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vinet::model::{
    write_embeddings, AssetCatalog, AssetRecord, Category, EmbeddingStore, Timestamp, Transaction,
};

pub const DAY: i64 = 86_400;
pub const T0: Timestamp = 1_609_459_200; // 2021-01-01

pub const CATEGORIES: [Category; 6] = [
    Category::Art,
    Category::Collectible,
    Category::Games,
    Category::Metaverse,
    Category::Utility,
    Category::Other,
];

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub collections: usize,
    /// Embedding clusters; more clusters means fewer similar pairs.
    pub clusters: usize,
    /// Noise added to cluster centres (unit-variance centres).
    pub noise: f64,
    /// First sales fall on one of this many days, so ties are common.
    pub days: i64,
    /// Share of assets that get an embedding.
    pub embedded: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 100,
            dim: 16,
            collections: 6,
            clusters: 4,
            noise: 0.6,
            days: 60,
            embedded: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synth {
    pub records: Vec<AssetRecord>,
    pub transactions: Vec<Transaction>,
    pub dim: usize,
    pub ids: Vec<String>,
    pub data: Vec<f32>,
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn synth(seed: u64, spec: SynthSpec) -> Synth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| (0..spec.dim).map(|_| gaussian(&mut rng)).collect())
        .collect();
    let mut records = Vec::with_capacity(spec.n);
    let mut transactions = Vec::new();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for i in 0..spec.n {
        let asset_id = format!("a{i:04}");
        let first = T0 + rng.random_range(0..spec.days) * DAY + rng.random_range(0..4) * 3_600;
        records.push(AssetRecord {
            asset_id: asset_id.clone(),
            collection_id: format!("col{:02}", rng.random_range(0..spec.collections)),
            category: CATEGORIES[rng.random_range(0..CATEGORIES.len())],
            first_sale_ts: first,
            embedding_index: None,
        });
        let sales = rng.random_range(1..=4);
        let mut price = 10.0 * (1.0 + 3.0 * rng.random::<f64>());
        for k in 0..sales {
            transactions.push(Transaction {
                asset_id: asset_id.clone(),
                ts: first + k * rng.random_range(1..40) * DAY,
                price_usd: (price * 100.0).round() / 100.0,
            });
            price *= 0.7 + 0.8 * rng.random::<f64>();
        }
        if rng.random::<f64>() < spec.embedded {
            let c = &centres[rng.random_range(0..spec.clusters)];
            ids.push(asset_id);
            data.extend(c.iter().map(|&x| (x + spec.noise * gaussian(&mut rng)) as f32));
        }
    }
    Synth {
        records,
        transactions,
        dim: spec.dim,
        ids,
        data,
    }
}

impl Synth {
    pub fn catalog(&self) -> AssetCatalog {
        AssetCatalog::new(self.records.clone(), self.transactions.clone()).expect("valid synthetic catalog")
    }

    pub fn store(&self) -> EmbeddingStore {
        EmbeddingStore::new(self.dim, self.data.clone(), self.ids.clone()).expect("valid synthetic store")
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        let row = self.ids.iter().position(|x| x == id)?;
        Some(&self.data[row * self.dim..(row + 1) * self.dim])
    }

    /// Writes `meta.tsv`, `tx.tsv`, `emb.bin` and `ids.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> InputFiles {
        let files = InputFiles {
            metadata: dir.join("meta.tsv"),
            transactions: dir.join("tx.tsv"),
            embeddings: dir.join("emb.bin"),
            ids: dir.join("ids.txt"),
        };
        let mut meta = String::from("asset_id\tcollection_id\tcategory\tfirst_sale_ts\n");
        for r in &self.records {
            let _ = writeln!(meta, "{}\t{}\t{}\t{}", r.asset_id, r.collection_id, r.category, r.first_sale_ts);
        }
        std::fs::write(&files.metadata, meta).unwrap();
        let mut tx = String::from("asset_id\tts\tprice_usd\n");
        for t in &self.transactions {
            let _ = writeln!(tx, "{}\t{}\t{}", t.asset_id, t.ts, t.price_usd);
        }
        std::fs::write(&files.transactions, tx).unwrap();
        write_embeddings(&self.store(), &files.embeddings, &files.ids).unwrap();
        files
    }
}

#[derive(Debug, Clone)]
pub struct InputFiles {
    pub metadata: PathBuf,
    pub transactions: PathBuf,
    pub embeddings: PathBuf,
    pub ids: PathBuf,
}

impl InputFiles {
    /// `--metadata … --ids …` flags.
    pub fn flags(&self) -> Vec<String> {
        vec![
            "--metadata".into(),
            self.metadata.display().to_string(),
            "--transactions".into(),
            self.transactions.display().to_string(),
            "--embeddings".into(),
            self.embeddings.display().to_string(),
            "--ids".into(),
            self.ids.display().to_string(),
        ]
    }
}

/// Daily BTC closes from `T0` for `days` days, header `Date,Close`.
pub fn write_btc_csv(path: &Path, days: i64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("Date,Close\n");
    let mut price = 29_000.0f64;
    for d in 0..days {
        let date = chrono::DateTime::from_timestamp(T0 + d * DAY, 0).unwrap().date_naive();
        price *= 1.0 + 0.03 * gaussian(&mut rng);
        let _ = writeln!(out, "{date},{:.2}", price);
    }
    std::fs::write(path, out).unwrap();
}
