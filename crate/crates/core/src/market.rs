//! Inspiring/inspired role classification and the financial dichotomy.
//!
//! Edges point inspired → inspiring, so edge targets are the inspiring assets
//! and edge sources the inspired ones. A node may hold both roles.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::model::{AssetCatalog, Transaction};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub inspiring: BTreeSet<String>,
    pub inspired: BTreeSet<String>,
}

pub fn classify_roles<G: DirectedGraph + ?Sized>(graph: &G) -> RoleAssignment {
    let mut roles = RoleAssignment::default();
    for e in graph.edges() {
        roles.inspiring.insert(graph.node_label(e.target).to_string());
        roles.inspired.insert(graph.node_label(e.source).to_string());
    }
    roles
}

/// How transactions are pooled before averaging across a role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Summarise each asset first, then average the per-asset figures.
    #[default]
    PerAsset,
    /// Price statistics over all role transactions pooled together; volume and
    /// transaction counts remain per-asset averages.
    PerTransaction,
}

impl std::str::FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "per-asset" | "asset" => Ok(Pooling::PerAsset),
            "per-transaction" | "transaction" => Ok(Pooling::PerTransaction),
            _ => Err(Error::Config(format!(
                "unknown pooling '{s}' (expected per-asset or per-transaction)"
            ))),
        }
    }
}

/// The six indicators for one role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleIndicators {
    pub average_volume_usd: f64,
    pub average_transactions: f64,
    pub average_price_usd: f64,
    pub maximum_price_usd: f64,
    pub minimum_price_usd: f64,
    pub stdev_price_usd: f64,
}

impl RoleIndicators {
    fn values(&self) -> [f64; 6] {
        [
            self.average_volume_usd,
            self.average_transactions,
            self.average_price_usd,
            self.maximum_price_usd,
            self.minimum_price_usd,
            self.stdev_price_usd,
        ]
    }
}

/// Indicator names in report order.
pub const INDICATOR_NAMES: [&str; 6] = [
    "average volume",
    "average #transactions",
    "average price",
    "maximum price",
    "minimum price",
    "st. dev. price",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleExtrema {
    pub maximum_price_usd: f64,
    pub minimum_price_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub pooling: Pooling,
    pub inspiring: RoleIndicators,
    pub inspired: RoleIndicators,
    /// inspiring ÷ inspired, in `INDICATOR_NAMES` order.
    pub ratios: [f64; 6],
    /// Members with at least one transaction.
    pub inspiring_members: usize,
    pub inspired_members: usize,
    /// Alternative max/min reading: the extreme single price across the role.
    pub inspiring_role_extrema: Option<RoleExtrema>,
    pub inspired_role_extrema: Option<RoleExtrema>,
}

impl DichotomyReport {
    /// Builds a report straight from role-level aggregates, e.g. published figures.
    pub fn from_aggregates(inspiring: RoleIndicators, inspired: RoleIndicators) -> Self {
        DichotomyReport {
            pooling: Pooling::PerAsset,
            ratios: ratios(&inspiring, &inspired),
            inspiring,
            inspired,
            inspiring_members: 0,
            inspired_members: 0,
            inspiring_role_extrema: None,
            inspired_role_extrema: None,
        }
    }

    /// CSV with columns `indicator,inspiring,inspired,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("indicator,inspiring,inspired,ratio\n");
        let a = self.inspiring.values();
        let b = self.inspired.values();
        for k in 0..6 {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                INDICATOR_NAMES[k], a[k], b[k], self.ratios[k]
            );
        }
        out
    }
}

fn ratios(a: &RoleIndicators, b: &RoleIndicators) -> [f64; 6] {
    let (a, b) = (a.values(), b.values());
    std::array::from_fn(|k| a[k] / b[k])
}

#[derive(Debug, Clone, Copy)]
struct AssetSummary {
    volume: f64,
    count: usize,
    mean: f64,
    max: f64,
    min: f64,
}

fn summarise(txs: &[&Transaction]) -> AssetSummary {
    let mut volume = 0.0f64;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for t in txs {
        volume += t.price_usd;
        max = max.max(t.price_usd);
        min = min.min(t.price_usd);
    }
    AssetSummary {
        volume,
        count: txs.len(),
        mean: volume / txs.len() as f64,
        max,
        min,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0f64, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    s / n as f64
}

fn population_stdev(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    let var = mean(xs.iter().map(|x| (x - m) * (x - m)));
    var.max(0.0).sqrt()
}

fn role_indicators(
    role: &str,
    members: &BTreeSet<String>,
    by_asset: &HashMap<&str, Vec<&Transaction>>,
    pooling: Pooling,
) -> Result<(RoleIndicators, RoleExtrema, usize)> {
    let mut summaries = Vec::new();
    let mut pooled: Vec<f64> = Vec::new();
    for id in members {
        if let Some(txs) = by_asset.get(id.as_str()).filter(|t| !t.is_empty()) {
            summaries.push(summarise(txs));
            if pooling == Pooling::PerTransaction {
                pooled.extend(txs.iter().map(|t| t.price_usd));
            }
        }
    }
    if summaries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{role} role has no member with a transaction"
        )));
    }
    let extrema = RoleExtrema {
        maximum_price_usd: summaries.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
        minimum_price_usd: summaries.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
    };
    let average_volume_usd = mean(summaries.iter().map(|s| s.volume));
    let average_transactions = mean(summaries.iter().map(|s| s.count as f64));
    let ind = match pooling {
        Pooling::PerAsset => {
            let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
            RoleIndicators {
                average_volume_usd,
                average_transactions,
                average_price_usd: mean(means.iter().copied()),
                maximum_price_usd: mean(summaries.iter().map(|s| s.max)),
                minimum_price_usd: mean(summaries.iter().map(|s| s.min)),
                stdev_price_usd: population_stdev(&means),
            }
        }
        Pooling::PerTransaction => RoleIndicators {
            average_volume_usd,
            average_transactions,
            average_price_usd: mean(pooled.iter().copied()),
            maximum_price_usd: extrema.maximum_price_usd,
            minimum_price_usd: extrema.minimum_price_usd,
            stdev_price_usd: population_stdev(&pooled),
        },
    };
    Ok((ind, extrema, summaries.len()))
}

pub fn financial_dichotomy(
    catalog: &AssetCatalog,
    roles: &RoleAssignment,
    pooling: Pooling,
) -> Result<DichotomyReport> {
    let by_asset = catalog.transactions_by_asset();
    let (inspiring, ex_a, n_a) = role_indicators("inspiring", &roles.inspiring, &by_asset, pooling)?;
    let (inspired, ex_b, n_b) = role_indicators("inspired", &roles.inspired, &by_asset, pooling)?;
    Ok(DichotomyReport {
        pooling,
        ratios: ratios(&inspiring, &inspired),
        inspiring,
        inspired,
        inspiring_members: n_a,
        inspired_members: n_b,
        inspiring_role_extrema: Some(ex_a),
        inspired_role_extrema: Some(ex_b),
    })
}
