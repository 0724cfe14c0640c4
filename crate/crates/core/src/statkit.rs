//! Shared statistical kernels: Mann-Whitney U, quantiles and kernel density
//! evaluation.
//!
//! Everything here is a pure function over slices. Quantiles use linear
//! interpolation between order statistics (the "inclusive" rule), and the
//! density estimator uses the kernel `exp(-u^2)` scaled by `1/sqrt(pi)` so
//! that the estimate integrates to one.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("sample must be non-empty")]
    EmptySample,
    #[error("quantile level {0} outside [0, 1]")]
    QuantileLevel(f64),
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// How a p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `U` for the first sample: the number of (x, y) pairs with x > y,
    /// ties counting one half.
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Mann-Whitney U test configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MannWhitney {
    /// Exact null distribution is used when `n * m <= exact_threshold`.
    pub exact_threshold: usize,
    pub two_sided: bool,
}

impl Default for MannWhitney {
    fn default() -> Self {
        Self {
            exact_threshold: 400,
            two_sided: true,
        }
    }
}

/// Two-sample Mann-Whitney U test with default settings.
///
/// With `two_sided = false` the alternative is that `x` tends to be larger
/// than `y`.
pub fn mann_whitney_u(x: &[f64], y: &[f64], two_sided: bool) -> Result<TestResult, StatError> {
    MannWhitney {
        two_sided,
        ..MannWhitney::default()
    }
    .test(x, y)
}

impl MannWhitney {
    pub fn test(&self, x: &[f64], y: &[f64]) -> Result<TestResult, StatError> {
        if x.is_empty() || y.is_empty() {
            return Err(StatError::EmptySample);
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(StatError::NonFinite);
        }
        let n = x.len();
        let m = y.len();
        let ranked = midranks(x.iter().chain(y).copied());
        // doubled ranks are integers even with midranks
        let doubled: Vec<u64> = ranked.ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let rank_sum_x2: u64 = doubled[..n].iter().sum();
        let base2 = (n * (n + 1)) as u64;
        let u = (rank_sum_x2 as f64 - base2 as f64) / 2.0;
        let mean_u = (n * m) as f64 / 2.0;

        if n * m <= self.exact_threshold {
            let p = exact_p(&doubled, n, rank_sum_x2, self.two_sided);
            return Ok(TestResult {
                statistic: u,
                p_value: p.clamp(0.0, 1.0),
                method: TestMethod::Exact,
            });
        }

        let total = (n + m) as f64;
        let tie_term: f64 = ranked.tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
        let var = (n * m) as f64 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
        let p = if var <= 0.0 {
            1.0
        } else {
            let sd = var.sqrt();
            if self.two_sided {
                let z = ((u - mean_u).abs() - 0.5).max(0.0) / sd;
                erfc(z / std::f64::consts::SQRT_2)
            } else {
                let z = (u - mean_u - 0.5) / sd;
                0.5 * erfc(z / std::f64::consts::SQRT_2)
            }
        };
        Ok(TestResult {
            statistic: u,
            p_value: p.clamp(0.0, 1.0),
            method: TestMethod::NormalApprox,
        })
    }
}

struct Ranked {
    ranks: Vec<f64>,
    tie_sizes: Vec<usize>,
}

/// 1-based midranks in input order, plus the sizes of tie groups.
fn midranks(values: impl Iterator<Item = f64>) -> Ranked {
    let mut indexed: Vec<(usize, f64)> = values.enumerate().collect();
    indexed.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut ranks = vec![0.0; indexed.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i + 1;
        while j < indexed.len() && indexed[j].1 == indexed[i].1 {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for item in &indexed[i..j] {
            ranks[item.0] = rank;
        }
        if j - i > 1 {
            tie_sizes.push(j - i);
        }
        i = j;
    }
    Ranked { ranks, tie_sizes }
}

/// Exact permutation p-value from the distribution of the (doubled) rank sum
/// of `n` items drawn without replacement from the pooled doubled ranks.
fn exact_p(doubled: &[u64], n: usize, observed: u64, two_sided: bool) -> f64 {
    let max_sum: u64 = {
        let mut sorted = doubled.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted[..n].iter().sum()
    };
    let width = max_sum as usize + 1;
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0.0f64; width]; n + 1];
    ways[0][0] = 1.0;
    for (idx, &r) in doubled.iter().enumerate() {
        let r = r as usize;
        let upper = n.min(idx + 1);
        for k in (1..=upper).rev() {
            let (lo, hi) = ways.split_at_mut(k);
            let prev = &lo[k - 1];
            let cur = &mut hi[0];
            for s in (r..width).rev() {
                let add = prev[s - r];
                if add != 0.0 {
                    cur[s] += add;
                }
            }
        }
    }
    let dist = &ways[n];
    let total: f64 = dist.iter().sum();
    let hits: f64 = if two_sided {
        // the null distribution of the rank sum is centred at n(N+1)/2
        let centre2 = (n * (doubled.len() + 1)) as i64;
        let obs_dev = (observed as i64 - centre2).abs();
        dist.iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - centre2).abs() >= obs_dev)
            .map(|(_, c)| c)
            .sum()
    } else {
        dist[observed as usize..].iter().sum()
    };
    hits / total
}

fn sorted_copy(sample: &[f64]) -> Result<Vec<f64>, StatError> {
    if sample.is_empty() {
        return Err(StatError::EmptySample);
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(StatError::NonFinite);
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sample: &[f64], q: f64) -> Result<f64, StatError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(StatError::QuantileLevel(q));
    }
    let sorted = sorted_copy(sample)?;
    Ok(quantile_sorted(&sorted, q))
}

pub fn median(sample: &[f64]) -> Result<f64, StatError> {
    quantile(sample, 0.5)
}

/// Interquartile range `Q3 - Q1`.
pub fn iqr(sample: &[f64]) -> Result<f64, StatError> {
    let sorted = sorted_copy(sample)?;
    Ok(quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25))
}

/// Upper Tukey fence `Q3 + k * IQR`.
pub fn upper_fence(sample: &[f64], k: f64) -> Result<f64, StatError> {
    let sorted = sorted_copy(sample)?;
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(q3 + k * (q3 - q1))
}

pub fn mean(sample: &[f64]) -> Option<f64> {
    if sample.is_empty() {
        None
    } else {
        Some(sample.iter().sum::<f64>() / sample.len() as f64)
    }
}

/// Population (divide-by-n) standard deviation.
pub fn population_std(sample: &[f64]) -> Option<f64> {
    let mu = mean(sample)?;
    let ss: f64 = sample.iter().map(|v| (v - mu) * (v - mu)).sum();
    Some((ss / sample.len() as f64).sqrt())
}

/// Sample (divide-by-(n-1)) standard deviation; zero for a single value.
pub fn sample_std(sample: &[f64]) -> Option<f64> {
    let mu = mean(sample)?;
    if sample.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = sample.iter().map(|v| (v - mu) * (v - mu)).sum();
    Some((ss / (sample.len() - 1) as f64).sqrt())
}

/// A density evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

impl DensityEstimate {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Mean of the estimated distribution (trapezoidal).
    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(x, p)| x * p)
            .collect();
        trapezoid(&self.grid, &weighted) / self.integral()
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `p(x) = 1/(n h sqrt(pi)) * sum_i exp(-((x - x_i)/h)^2)` on each grid point.
pub fn kde_evaluate(sample: &[f64], grid: &[f64], bandwidth: f64) -> Result<DensityEstimate, StatError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(StatError::Bandwidth(bandwidth));
    }
    if sample.is_empty() {
        return Err(StatError::EmptySample);
    }
    let norm = 1.0 / (sample.len() as f64 * bandwidth * std::f64::consts::PI.sqrt());
    let density = grid
        .iter()
        .map(|&x| {
            norm * sample
                .iter()
                .map(|&xi| {
                    let u = (x - xi) / bandwidth;
                    (-u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        density,
        bandwidth,
        n: sample.len(),
    })
}

/// Scott-style bandwidth `n^(-1/5) * min(std, IQR/1.349)`.
///
/// When the robust spread is zero but the standard deviation is not, the
/// standard deviation is used alone. A sample with no spread at all gets
/// `1e-3 * max(max|x|, 1)`.
pub fn scott_bandwidth(sample: &[f64]) -> Result<f64, StatError> {
    let std = sample_std(sample).ok_or(StatError::EmptySample)?;
    let spread_iqr = iqr(sample)? / 1.349;
    let sigma = if spread_iqr > 0.0 { std.min(spread_iqr) } else { std };
    if sigma > 0.0 {
        Ok((sample.len() as f64).powf(-0.2) * sigma)
    } else {
        let scale = sample.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        Ok(1e-3 * scale)
    }
}

/// Evenly spaced grid from `min - pad*h` to `max + pad*h`, dense enough that
/// the spacing never exceeds `h / 8`.
pub fn density_grid(sample: &[f64], bandwidth: f64, pad: f64, min_points: usize) -> Vec<f64> {
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - pad * bandwidth;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad * bandwidth;
    let needed = ((hi - lo) / (bandwidth / 8.0)).ceil() as usize + 1;
    let points = needed.clamp(min_points.max(2), 20_000);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Automatic-bandwidth density on an automatic grid.
pub fn kde_auto(sample: &[f64]) -> Result<DensityEstimate, StatError> {
    let h = scott_bandwidth(sample)?;
    let grid = density_grid(sample, h, 5.0, 512);
    kde_evaluate(sample, &grid, h)
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Square-root rule for the bin count, capped at 50 bins. An empty sample
    /// gives an empty histogram.
    pub fn from_sample(sample: &[f64]) -> Histogram {
        if sample.is_empty() {
            return Histogram {
                edges: Vec::new(),
                counts: Vec::new(),
            };
        }
        let bins = ((sample.len() as f64).sqrt().ceil() as usize).clamp(1, 50);
        let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1e-3 * lo.abs().max(1.0);
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &v in sample {
            let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
