//! Discrete power-law fitting with KS-based cutoff selection and a
//! semi-parametric bootstrap goodness-of-fit test.
//!
//! For every candidate cutoff `x_min` the exponent is the exact discrete
//! maximum-likelihood estimate, i.e. the maximiser of
//! `-n ln ζ(α, x_min) - α Σ ln x`. The cutoff whose fitted model is closest
//! to the tail in KS distance wins. The p-value is the share of synthetic
//! datasets, drawn from the fitted hybrid (empirical body, power-law tail) and
//! refitted from scratch, whose KS distance is at least the observed one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ALPHA_LO: f64 = 1.0 + 1e-6;
const ALPHA_HI: f64 = 30.0;
const ALPHA_TOL: f64 = 1e-9;

/// Bernoulli-number coefficients `B_2k / (2k)!` for the Euler–Maclaurin tail.
const EM_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
];

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q + k)^{-s}` for `s > 1`, `q > 0`.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    debug_assert!(s > 1.0 && q > 0.0);
    const SHIFT: f64 = 12.0;
    let mut head = 0.0;
    let mut a = q;
    while a < SHIFT {
        head += a.powf(-s);
        a += 1.0;
    }
    // Euler–Maclaurin from `a` onwards.
    let a_pow = a.powf(-s);
    let mut tail = a * a_pow / (s - 1.0) + 0.5 * a_pow;
    let inv_a2 = 1.0 / (a * a);
    let mut rising = s; // s (s+1) ... (s+2k-2)
    let mut power = a_pow / a; // a^{-s-2k+1}
    for (k, c) in EM_COEFFS.iter().enumerate() {
        tail += c * rising * power;
        let k2 = 2.0 * k as f64;
        rising *= (s + k2 + 1.0) * (s + k2 + 2.0);
        power *= inv_a2;
    }
    head + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x_min: u64,
    pub alpha: f64,
    pub ks: f64,
    pub n_tail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub x_min: u64,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub n_tail: usize,
    /// Strictly positive observations used.
    pub n_observations: usize,
    pub bootstraps: usize,
    pub scan: Vec<ScanPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawOptions {
    pub bootstraps: usize,
    pub seed: u64,
    /// Minimum count of strictly positive observations.
    pub min_observations: usize,
    /// Smallest tail a candidate cutoff may leave.
    pub min_tail: usize,
}

impl Default for PowerLawOptions {
    fn default() -> Self {
        PowerLawOptions {
            bootstraps: 1000,
            seed: 0,
            min_observations: 50,
            min_tail: 10,
        }
    }
}

/// Distinct values with multiplicities, ascending.
#[derive(Debug, Clone)]
struct Histogram {
    values: Vec<u64>,
    counts: Vec<usize>,
    /// `suffix_n[k]`: observations with value ≥ `values[k]`.
    suffix_n: Vec<usize>,
    /// `suffix_log[k]`: Σ ln x over those observations.
    suffix_log: Vec<f64>,
}

impl Histogram {
    fn new(sorted: &[u64]) -> Self {
        let mut values = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for &x in sorted {
            if values.last() == Some(&x) {
                *counts.last_mut().expect("nonempty") += 1;
            } else {
                values.push(x);
                counts.push(1);
            }
        }
        let k = values.len();
        let mut suffix_n = vec![0usize; k + 1];
        let mut suffix_log = vec![0.0f64; k + 1];
        for i in (0..k).rev() {
            suffix_n[i] = suffix_n[i + 1] + counts[i];
            suffix_log[i] = suffix_log[i + 1] + counts[i] as f64 * (values[i] as f64).ln();
        }
        Histogram {
            values,
            counts,
            suffix_n,
            suffix_log,
        }
    }
}

/// Discrete MLE of α for a tail of `n` values ≥ `x_min` with `Σ ln x = sum_log`.
pub fn fit_alpha(n: usize, sum_log: f64, x_min: u64) -> f64 {
    let q = x_min as f64;
    let nll = |a: f64| n as f64 * hurwitz_zeta(a, q).ln() + a * sum_log;
    // Golden-section search; the negative log-likelihood is convex in α.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (nll(c), nll(d));
    while hi - lo > ALPHA_TOL {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = nll(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = nll(d);
        }
    }
    0.5 * (lo + hi)
}

/// KS distance between the tail `hist.values[start..]` and the fitted law.
fn ks_distance(hist: &Histogram, start: usize, alpha: f64) -> f64 {
    let x_min = hist.values[start];
    let n = hist.suffix_n[start] as f64;
    let z_min = hurwitz_zeta(alpha, x_min as f64);
    // zeta(alpha, x) tracked while walking up the distinct values
    let mut z_at = z_min;
    let mut x_at = x_min;
    let advance = |target: u64, z_at: &mut f64, x_at: &mut u64| {
        if target - *x_at <= 64 {
            while *x_at < target {
                *z_at -= (*x_at as f64).powf(-alpha);
                *x_at += 1;
            }
        } else {
            *z_at = hurwitz_zeta(alpha, target as f64);
            *x_at = target;
        }
    };
    let mut seen = 0usize;
    let mut d = 0.0f64;
    let k = hist.values.len();
    for i in start..k {
        seen += hist.counts[i];
        let emp = seen as f64 / n;
        let x = hist.values[i];
        // model CDF at x is 1 - ζ(α, x+1)/ζ(α, x_min)
        advance(x + 1, &mut z_at, &mut x_at);
        let cdf_x = 1.0 - z_at / z_min;
        d = d.max((emp - cdf_x).abs());
        // just before the next observed value the empirical CDF is still `emp`
        if i + 1 < k {
            let next = hist.values[i + 1];
            if next > x + 1 {
                advance(next, &mut z_at, &mut x_at);
                let cdf_before = 1.0 - z_at / z_min;
                d = d.max((emp - cdf_before).abs());
            }
        }
    }
    d
}

struct Scan {
    best: usize,
    points: Vec<ScanPoint>,
}

fn scan(hist: &Histogram, min_tail: usize) -> Option<Scan> {
    let mut points: Vec<ScanPoint> = Vec::new();
    let mut best: Option<usize> = None;
    for start in 0..hist.values.len() {
        let n_tail = hist.suffix_n[start];
        // need two distinct tail values for a finite MLE
        if n_tail < min_tail || start + 1 >= hist.values.len() {
            break;
        }
        let x_min = hist.values[start];
        let alpha = fit_alpha(n_tail, hist.suffix_log[start], x_min);
        let ks = ks_distance(hist, start, alpha);
        if best.is_none_or(|b: usize| ks < points[b].ks) {
            best = Some(points.len());
        }
        points.push(ScanPoint {
            x_min,
            alpha,
            ks,
            n_tail,
        });
    }
    best.map(|best| Scan { best, points })
}

/// Sampler for the discrete power law on `[x_min, ∞)`.
pub struct DiscretePowerLaw {
    alpha: f64,
    x_min: u64,
    z_min: f64,
    /// `ccdf[k] = P(X ≥ x_min + k)`, strictly decreasing, `ccdf[0] = 1`.
    ccdf: Vec<f64>,
}

impl DiscretePowerLaw {
    const TABLE: usize = 1 << 16;

    pub fn new(alpha: f64, x_min: u64) -> Self {
        let z_min = hurwitz_zeta(alpha, x_min as f64);
        let mut ccdf = Vec::with_capacity(Self::TABLE);
        let mut z = z_min;
        for k in 0..Self::TABLE as u64 {
            ccdf.push(z / z_min);
            z -= ((x_min + k) as f64).powf(-alpha);
            if z <= 0.0 {
                break;
            }
        }
        DiscretePowerLaw {
            alpha,
            x_min,
            z_min,
            ccdf,
        }
    }

    fn ccdf_at(&self, x: u64) -> f64 {
        let k = (x - self.x_min) as usize;
        match self.ccdf.get(k) {
            Some(&p) => p,
            None => hurwitz_zeta(self.alpha, x as f64) / self.z_min,
        }
    }

    /// Largest `x` with `P(X ≥ x) ≥ u`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let last = *self.ccdf.last().expect("table nonempty");
        if u >= last {
            // ccdf is decreasing: count entries ≥ u
            let k = self.ccdf.partition_point(|&p| p >= u);
            return self.x_min + k as u64 - 1;
        }
        let mut lo = self.x_min + self.ccdf.len() as u64 - 1;
        let mut hi = lo.saturating_mul(2).max(lo + 1);
        while self.ccdf_at(hi) >= u {
            lo = hi;
            if hi > u64::MAX / 4 {
                return hi;
            }
            hi *= 2;
        }
        // invariant: ccdf(lo) ≥ u > ccdf(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.ccdf_at(mid) >= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

fn positive_sorted(data: &[u64]) -> Vec<u64> {
    let mut v: Vec<u64> = data.iter().copied().filter(|&x| x > 0).collect();
    v.sort_unstable();
    v
}

/// Fit without the bootstrap; `p_value` is left at NaN and `bootstraps` at 0.
pub fn fit_power_law_point(data: &[u64], opts: &PowerLawOptions) -> Result<PowerLawFit> {
    let sorted = positive_sorted(data);
    if sorted.len() < opts.min_observations {
        return Err(Error::InsufficientData(format!(
            "{} positive observations, need at least {}",
            sorted.len(),
            opts.min_observations
        )));
    }
    let hist = Histogram::new(&sorted);
    if hist.values.len() < 2 {
        return Err(Error::Degenerate(
            "all observations are equal; no tail to fit".into(),
        ));
    }
    let s = scan(&hist, opts.min_tail.max(2)).ok_or_else(|| {
        Error::InsufficientData(format!(
            "no cutoff leaves {} tail observations with two distinct values",
            opts.min_tail
        ))
    })?;
    let best = s.points[s.best];
    Ok(PowerLawFit {
        alpha: best.alpha,
        x_min: best.x_min,
        ks_statistic: best.ks,
        p_value: f64::NAN,
        n_tail: best.n_tail,
        n_observations: sorted.len(),
        bootstraps: 0,
        scan: s.points,
    })
}

/// Full fit with `opts.bootstraps` semi-parametric resamples.
pub fn fit_power_law(data: &[u64], opts: &PowerLawOptions) -> Result<PowerLawFit> {
    let mut fit = fit_power_law_point(data, opts)?;
    if opts.bootstraps == 0 {
        return Ok(fit);
    }
    let sorted = positive_sorted(data);
    let body: Vec<u64> = sorted.iter().copied().filter(|&x| x < fit.x_min).collect();
    let n = sorted.len();
    let tail_share = fit.n_tail as f64 / n as f64;
    let law = DiscretePowerLaw::new(fit.alpha, fit.x_min);
    let observed = fit.ks_statistic;

    let exceed: usize = (0..opts.bootstraps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64 + 1);
            let mut synth: Vec<u64> = (0..n)
                .map(|_| {
                    if body.is_empty() || rng.random::<f64>() < tail_share {
                        law.sample(&mut rng)
                    } else {
                        body[rng.random_range(0..body.len())]
                    }
                })
                .collect();
            synth.sort_unstable();
            let hist = Histogram::new(&synth);
            match scan(&hist, opts.min_tail.max(2)) {
                Some(s) => (s.points[s.best].ks >= observed) as usize,
                // a synthetic set too degenerate to fit cannot beat the observed fit
                None => 1,
            }
        })
        .sum();
    fit.p_value = exceed as f64 / opts.bootstraps as f64;
    fit.bootstraps = opts.bootstraps;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_reference_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - pi2_6).abs() < 1e-13);
        assert!((hurwitz_zeta(3.0, 1.0) - 1.202_056_903_159_594).abs() < 1e-13);
        assert!((hurwitz_zeta(2.5, 1.0) - 1.341_487_257_250_917).abs() < 1e-13);
        // ζ(2, 2) = π²/6 − 1
        assert!((hurwitz_zeta(2.0, 2.0) - (pi2_6 - 1.0)).abs() < 1e-13);
        // recurrence ζ(s, q) = q^{-s} + ζ(s, q + 1)
        for &(s, q) in &[(1.3, 0.7), (4.94, 168.0), (2.01, 30.0)] {
            let lhs = hurwitz_zeta(s, q);
            let rhs = q.powf(-s) + hurwitz_zeta(s, q + 1.0);
            assert!(((lhs - rhs) / lhs).abs() < 1e-12, "s={s} q={q}");
        }
    }

    #[test]
    fn mle_stationary_point() {
        // derivative of the log-likelihood vanishes at the estimate
        let data = [1u64, 1, 1, 1, 2, 2, 3, 5, 8, 20];
        let n = data.len();
        let sum_log: f64 = data.iter().map(|&x| (x as f64).ln()).sum();
        let a = fit_alpha(n, sum_log, 1);
        let ll = |a: f64| -(n as f64) * hurwitz_zeta(a, 1.0).ln() - a * sum_log;
        let h = 1e-5;
        assert!(((ll(a + h) - ll(a - h)) / (2.0 * h)).abs() < 1e-4);
    }

    #[test]
    fn all_equal_is_degenerate() {
        let data = vec![7u64; 100];
        assert!(matches!(
            fit_power_law(&data, &PowerLawOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_observations() {
        let data: Vec<u64> = (1..=20).collect();
        assert!(matches!(
            fit_power_law(&data, &PowerLawOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn sampler_matches_ccdf() {
        let law = DiscretePowerLaw::new(2.5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 200_000;
        let mut at_least_5 = 0usize;
        let mut min = u64::MAX;
        for _ in 0..draws {
            let x = law.sample(&mut rng);
            min = min.min(x);
            at_least_5 += (x >= 5) as usize;
        }
        assert_eq!(min, 3);
        let expected = hurwitz_zeta(2.5, 5.0) / hurwitz_zeta(2.5, 3.0);
        let got = at_least_5 as f64 / draws as f64;
        assert!((got - expected).abs() < 0.005, "{got} vs {expected}");
    }

    #[test]
    fn chosen_cutoff_minimises_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let law = DiscretePowerLaw::new(2.2, 1);
        let data: Vec<u64> = (0..2000).map(|_| law.sample(&mut rng)).collect();
        let fit = fit_power_law_point(&data, &PowerLawOptions::default()).unwrap();
        let min_ks = fit.scan.iter().map(|p| p.ks).fold(f64::INFINITY, f64::min);
        assert_eq!(fit.ks_statistic, min_ks);
        assert!(fit.n_tail >= 10);
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let law = DiscretePowerLaw::new(2.5, 1);
        let data: Vec<u64> = (0..500).map(|_| law.sample(&mut rng)).collect();
        let opts = PowerLawOptions {
            bootstraps: 40,
            seed: 9,
            ..PowerLawOptions::default()
        };
        let a = fit_power_law(&data, &opts).unwrap();
        let b = fit_power_law(&data, &opts).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert!((0.0..=1.0).contains(&a.p_value));
    }
}
