//! Antithetic permutation-sampling Shapley estimator.
//!
//! Each sampled permutation is followed by its reverse. Walking a permutation
//! adds features one at a time; the marginal value of feature `f` is the
//! oracle's gain when `f` joins the features before it. The empty and full
//! coalitions are evaluated once and shared, so every walk telescopes to
//! exactly `full - base` and efficiency holds up to round-off.
//!
//! The estimate targets the standard Shapley kernel
//! `|S|! (|F| - |S| - 1)! / |F|!`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{PairOracle, ValidatingOracle};
use super::FeatureGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    /// Oracle-evaluation budget `K` used to size the permutation sample.
    pub samples: usize,
    pub seed: u64,
    /// Hard cap on oracle evaluations; exceeding it is an error, not a truncation.
    pub max_oracle_calls: Option<usize>,
    /// Masks per oracle request.
    pub batch_masks: usize,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            samples: 10_000,
            seed: 0,
            max_oracle_calls: None,
            batch_masks: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMap {
    pub pair_id: Option<String>,
    pub grid: Option<FeatureGrid>,
    pub phi: Vec<f64>,
    /// Monte-Carlo standard error per feature, over antithetic pair means.
    pub stderr: Vec<f64>,
    pub base_value: f64,
    pub full_value: f64,
    /// The requested budget `K`.
    pub samples_used: usize,
    pub permutations: usize,
    pub oracle_evaluations: usize,
    /// `Σ phi - (full - base)`.
    pub efficiency_residual: f64,
    /// `sqrt(Σ stderr_f²)`, the standard error of `Σ phi` ignoring covariances.
    pub efficiency_stderr: f64,
    pub seed: u64,
}

/// Permutations (always even, at least 2) that fit a budget of `k`
/// evaluations for `n` features; each walk costs `n - 1` new evaluations.
pub fn permutation_count(k: usize, n: usize) -> usize {
    let per = n.saturating_sub(1).max(1);
    (2 * (k / (2 * per))).max(2)
}

/// Estimates Shapley values of `n_features` features against `oracle`.
pub fn shapley_estimate<O: PairOracle + ?Sized>(
    oracle: &mut O,
    n_features: usize,
    cfg: &ShapleyConfig,
) -> Result<ExplanationMap> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("sample budget K must be at least 1".into()));
    }
    if n_features < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 features, got {n_features}"
        )));
    }
    let n = n_features;
    let perms = permutation_count(cfg.samples, n);
    let needed = 2 + perms * (n - 1);
    if let Some(budget) = cfg.max_oracle_calls {
        if needed > budget {
            return Err(Error::OracleBudget { needed, budget });
        }
    }
    let mut oracle = ValidatingOracle::new(oracle);

    let ends = oracle.evaluate(&[vec![false; n], vec![true; n]])?;
    let (base, full) = (ends[0], ends[1]);

    // Draw all permutations up front so the result does not depend on batching.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(perms);
    for _ in 0..perms / 2 {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        let rev: Vec<usize> = p.iter().rev().copied().collect();
        orders.push(p);
        orders.push(rev);
    }

    // marginals[p * n + f]
    let mut marginals = vec![0.0f64; perms * n];
    let per_batch = (cfg.batch_masks / (n - 1)).max(1);
    for (chunk_idx, chunk) in orders.chunks(per_batch).enumerate() {
        let mut masks = Vec::with_capacity(chunk.len() * (n - 1));
        for order in chunk {
            let mut m = vec![false; n];
            for &f in &order[..n - 1] {
                m[f] = true;
                masks.push(m.clone());
            }
        }
        let values = oracle.evaluate(&masks)?;
        for (k, order) in chunk.iter().enumerate() {
            let p = chunk_idx * per_batch + k;
            let vals = &values[k * (n - 1)..(k + 1) * (n - 1)];
            let mut prev = base;
            for (step, &f) in order.iter().enumerate() {
                let cur = if step + 1 == n { full } else { vals[step] };
                marginals[p * n + f] = cur - prev;
                prev = cur;
            }
        }
    }

    let pairs = perms / 2;
    let mut phi = vec![0.0f64; n];
    let mut stderr = vec![0.0f64; n];
    for f in 0..n {
        let means: Vec<f64> = (0..pairs)
            .map(|q| 0.5 * (marginals[2 * q * n + f] + marginals[(2 * q + 1) * n + f]))
            .collect();
        let mean = means.iter().sum::<f64>() / pairs as f64;
        phi[f] = mean;
        if pairs > 1 {
            let var = means.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (pairs - 1) as f64;
            stderr[f] = (var / pairs as f64).sqrt();
        }
    }
    let efficiency_residual = phi.iter().sum::<f64>() - (full - base);
    let efficiency_stderr = stderr.iter().map(|s| s * s).sum::<f64>().sqrt();
    debug_assert_eq!(oracle.calls, needed);
    Ok(ExplanationMap {
        pair_id: None,
        grid: None,
        phi,
        stderr,
        base_value: base,
        full_value: full,
        samples_used: cfg.samples,
        permutations: perms,
        oracle_evaluations: oracle.calls,
        efficiency_residual,
        efficiency_stderr,
        seed: cfg.seed,
    })
}

/// Explains one image pair on `grid`.
pub fn explain_pair<O: PairOracle + ?Sized>(
    oracle: &mut O,
    pair_id: &str,
    grid: FeatureGrid,
    cfg: &ShapleyConfig,
) -> Result<ExplanationMap> {
    let mut map = shapley_estimate(oracle, grid.feature_count(), cfg)?;
    map.pair_id = Some(pair_id.to_string());
    map.grid = Some(grid);
    Ok(map)
}

/// Exact Shapley values by enumerating all `2^n` coalitions (`n ≤ 20`).
pub fn exact_shapley(n: usize, mut value: impl FnMut(&[bool]) -> f64) -> Vec<f64> {
    assert!(n <= 20, "exact enumeration is limited to 20 features");
    let size = 1usize << n;
    let mut v = vec![0.0f64; size];
    let mut mask = vec![false; n];
    for (s, slot) in v.iter_mut().enumerate() {
        for (f, b) in mask.iter_mut().enumerate() {
            *b = s >> f & 1 == 1;
        }
        *slot = value(&mask);
    }
    // weight[k] = k! (n - k - 1)! / n!
    let mut weight = vec![0.0f64; n];
    for (k, w) in weight.iter_mut().enumerate() {
        let mut x = 1.0 / n as f64;
        // 1 / (n * C(n-1, k))
        for i in 0..k {
            x *= (i + 1) as f64 / (n - 1 - i) as f64;
        }
        *w = x;
    }
    let mut phi = vec![0.0f64; n];
    for s in 0..size {
        let k = s.count_ones() as usize;
        for (f, p) in phi.iter_mut().enumerate() {
            if s >> f & 1 == 0 {
                *p += weight[k] * (v[s | 1 << f] - v[s]);
            }
        }
    }
    phi
}
