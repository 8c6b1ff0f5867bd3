//! Pearson correlation and time-lagged cross-correlation.
//!
//! `r(ℓ)` correlates `s[t + ℓ]` with `s'[t]` over the indices where both are
//! present; series ends are truncated, never padded or wrapped. A negative peak
//! lag therefore means `s` leads `s'`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Timestamp;
use crate::timeseries::{next_bucket, TimeSeries};

/// Fewest paired observations a correlation is computed from.
pub const MIN_OVERLAP: usize = 3;

/// Pearson coefficient over pairwise-complete observations, with the overlap size.
///
/// The formula is symmetric in its arguments term by term, so swapping the
/// two series yields a bit-identical result.
pub fn pearson_pairs(pairs: &[(f64, f64)]) -> Result<f64> {
    let n = pairs.len();
    if n < MIN_OVERLAP {
        return Err(Error::InsufficientData(format!(
            "{n} paired samples, need at least {MIN_OVERLAP}"
        )));
    }
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for &(x, y) in pairs {
        sx += x;
        sy += y;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut sxy, mut sxx, mut syy) = (0.0f64, 0.0f64, 0.0f64);
    for &(x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson coefficient of two aligned series, skipping indices where either is missing.
pub fn pearson(s: &[Option<f64>], s2: &[Option<f64>]) -> Result<f64> {
    if s.len() != s2.len() {
        return Err(Error::LengthMismatch(s.len(), s2.len()));
    }
    let pairs: Vec<(f64, f64)> = s
        .iter()
        .zip(s2)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    pearson_pairs(&pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlccResult {
    /// `-T..=T`.
    pub lags: Vec<i64>,
    /// `None` where the overlap is too short or a side has zero variance.
    pub correlations: Vec<Option<f64>>,
    pub n_overlap: Vec<usize>,
    pub peak_lag: Option<i64>,
    pub peak_r: Option<f64>,
}

impl TlccResult {
    pub fn max_lag(&self) -> i64 {
        self.lags.last().copied().unwrap_or(0)
    }

    pub fn at(&self, lag: i64) -> Option<f64> {
        let t = self.max_lag();
        if lag.abs() > t {
            return None;
        }
        self.correlations[(lag + t) as usize]
    }

    /// Whether every lag other than zero is missing.
    pub fn only_lag_zero(&self) -> bool {
        self.lags
            .iter()
            .zip(&self.correlations)
            .all(|(&l, r)| l == 0 || r.is_none())
    }

    /// Correlogram CSV with columns `lag,r,n_overlap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,r,n_overlap\n");
        for k in 0..self.lags.len() {
            let r = self.correlations[k].map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", self.lags[k], r, self.n_overlap[k]);
        }
        out
    }
}

/// Time-lagged cross-correlation of two aligned, equal-length series for lags in `[-T, T]`.
pub fn tlcc(s: &[Option<f64>], s2: &[Option<f64>], max_lag: usize) -> Result<TlccResult> {
    if max_lag == 0 {
        return Err(Error::InvalidArgument("maximum lag must be at least 1".into()));
    }
    if s.len() != s2.len() {
        return Err(Error::LengthMismatch(s.len(), s2.len()));
    }
    let t = max_lag as i64;
    let len = s.len() as i64;
    let mut out = TlccResult {
        lags: (-t..=t).collect(),
        correlations: Vec::with_capacity(2 * max_lag + 1),
        n_overlap: Vec::with_capacity(2 * max_lag + 1),
        peak_lag: None,
        peak_r: None,
    };
    for &lag in &out.lags {
        // indices u of s2 with u + lag inside s
        let lo = 0.max(-lag);
        let hi = len.min(len - lag);
        let pairs: Vec<(f64, f64)> = (lo..hi)
            .filter_map(|u| Some((s[(u + lag) as usize]?, s2[u as usize]?)))
            .collect();
        out.n_overlap.push(pairs.len());
        out.correlations.push(pearson_pairs(&pairs).ok());
    }
    for (&lag, r) in out.lags.iter().zip(&out.correlations) {
        if let Some(r) = *r {
            if out.peak_r.is_none_or(|p: f64| r.abs() > p.abs()) {
                out.peak_r = Some(r);
                out.peak_lag = Some(lag);
            }
        }
    }
    Ok(out)
}

/// Shared bucket starts with both series' values on them.
pub type AlignedPair = (Vec<Timestamp>, Vec<Option<f64>>, Vec<Option<f64>>);

/// Aligns two series of the same sampling onto their common calendar span.
/// Buckets only one side covers are missing on the other.
pub fn align(a: &TimeSeries, b: &TimeSeries) -> Result<AlignedPair> {
    if a.sampling != b.sampling {
        return Err(Error::InvalidArgument(format!(
            "series sampling differs ({} vs {})",
            a.sampling, b.sampling
        )));
    }
    let (Some(&a0), Some(&b0)) = (a.starts.first(), b.starts.first()) else {
        return Err(Error::InsufficientData("empty series".into()));
    };
    let lo = a0.min(b0);
    let hi = (*a.starts.last().unwrap()).max(*b.starts.last().unwrap());
    let mut starts = Vec::new();
    let mut s = lo;
    while s <= hi {
        starts.push(s);
        s = next_bucket(s, a.sampling);
    }
    let place = |ts: &TimeSeries| -> Result<Vec<Option<f64>>> {
        let mut v = vec![None; starts.len()];
        for (start, value) in ts.starts.iter().zip(&ts.values) {
            let k = starts.binary_search(start).map_err(|_| {
                Error::InvalidArgument("series bucket starts are not calendar-aligned".into())
            })?;
            v[k] = *value;
        }
        Ok(v)
    };
    let va = place(a)?;
    let vb = place(b)?;
    Ok((starts, va, vb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn some(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().map(|&x| Some(x)).collect()
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&some(&[1., 2., 3.]), &some(&[2., 4., 6.])).unwrap(), 1.0);
        assert_eq!(pearson(&some(&[1., 2., 3.]), &some(&[3., 2., 1.])).unwrap(), -1.0);
        let r = pearson(&some(&[1., 2., 3., 4.]), &some(&[1., 3., 2., 4.])).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert!(matches!(
            pearson(&some(&[1., 1., 1.]), &some(&[1., 2., 3.])),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            pearson(&[Some(1.), None, Some(2.)], &some(&[1., 2., 3.])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn identical_series_peak_at_zero() {
        let s: Vec<Option<f64>> = (0..30).map(|i| Some((i as f64 * 0.7).sin() + 0.1 * i as f64)).collect();
        let r = tlcc(&s, &s, 6).unwrap();
        assert_eq!(r.peak_lag, Some(0));
        assert!((r.peak_r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.lags.len(), 13);
        assert_eq!(r.n_overlap[6], 30);
        assert_eq!(r.n_overlap[0], 24);
    }

    #[test]
    fn leading_series_has_negative_peak() {
        let base: Vec<f64> = (0..40).map(|i| (i as f64 * 0.5).sin() + 0.05 * i as f64).collect();
        let s = some(&base[3..]);
        let s2 = some(&base[..37]); // s2[t] = s[t - 3]
        let r = tlcc(&s, &s2, 8).unwrap();
        assert_eq!(r.peak_lag, Some(-3));
    }

    #[test]
    fn short_overlap_is_missing() {
        let s = some(&[1., 2., 4., 3.]);
        let r = tlcc(&s, &s, 3).unwrap();
        assert_eq!(r.at(3), None);
        assert_eq!(r.at(-3), None);
        assert!(r.at(1).is_some());
        assert!(tlcc(&s, &s, 0).is_err());
        let csv = r.to_csv();
        assert!(csv.starts_with("lag,r,n_overlap\n-3,,1\n"));
    }
}
