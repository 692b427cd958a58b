//! Percentile bootstrap of trimmed means and medians.
//!
//! A resample draws `n` indices with replacement. Because both statistics
//! depend only on how often each order statistic was drawn, the engine sorts
//! the data once, counts draws per order statistic and reads the statistic
//! off the counts, never materializing or sorting a resample.
//!
//! Resample `r` draws from its own generator seeded from `(seed, r)`, so the
//! bootstrap distribution is identical for any number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRIM: f64 = 0.2;
pub const DEFAULT_CONF: f64 = 0.99;
pub const DEFAULT_RESAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Statistic {
    /// Mean after dropping `⌊trim · n⌋` values from each tail.
    TrimmedMean(f64),
    Median,
}

fn validate_trim(trim: f64) -> Result<()> {
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidArgument(format!("trim {trim} outside [0, 0.5)")));
    }
    Ok(())
}

/// Number of values dropped from each tail.
pub fn trim_count(n: usize, trim: f64) -> usize {
    (trim * n as f64).floor() as usize
}

fn retained(n: usize, trim: f64) -> Result<usize> {
    let g = trim_count(n, trim);
    if n <= 2 * g {
        return Err(Error::EmptyAfterTrim { len: n, trimmed: g });
    }
    Ok(g)
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if let Some((index, &value)) = xs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(())
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut s = xs.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

/// Mean of the central values of a sorted slice, accumulated relative to
/// the middle element so that constant data reproduces its value exactly.
fn centered_mean(sorted: &[f64]) -> f64 {
    let pivot = sorted[sorted.len() / 2];
    pivot + sorted.iter().map(|v| v - pivot).sum::<f64>() / sorted.len() as f64
}

fn sorted_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        a + (b - a) / 2.0
    }
}

/// 20 % trimmed mean and friends: sorts, drops `⌊trim · n⌋` from each tail
/// and averages the rest.
pub fn trimmed_mean(xs: &[f64], trim: f64) -> Result<f64> {
    validate_trim(trim)?;
    check_finite(xs)?;
    let g = retained(xs.len(), trim)?;
    let sorted = sorted_copy(xs);
    Ok(centered_mean(&sorted[g..sorted.len() - g]))
}

impl Statistic {
    fn validate(self, n: usize) -> Result<()> {
        match self {
            Statistic::TrimmedMean(trim) => {
                validate_trim(trim)?;
                retained(n, trim).map(|_| ())
            }
            Statistic::Median if n == 0 => Err(Error::InvalidArgument("median of an empty sample".into())),
            Statistic::Median => Ok(()),
        }
    }

    pub fn evaluate(self, xs: &[f64]) -> Result<f64> {
        self.validate(xs.len())?;
        check_finite(xs)?;
        let sorted = sorted_copy(xs);
        Ok(self.evaluate_sorted(&sorted))
    }

    fn evaluate_sorted(self, sorted: &[f64]) -> f64 {
        match self {
            Statistic::TrimmedMean(trim) => {
                let g = trim_count(sorted.len(), trim);
                centered_mean(&sorted[g..sorted.len() - g])
            }
            Statistic::Median => sorted_median(sorted),
        }
    }
}

/// Seed of resample `r`'s generator.
pub fn stream_seed(seed: u64, r: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(r.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Uniform indices in `0..n` from 32-bit halves of the generator output
/// (low half first), using multiply-shift with rejection so every index is
/// equally likely.
struct IndexSampler {
    rng: Xoshiro256PlusPlus,
    n: u32,
    threshold: u32,
}

impl IndexSampler {
    fn new(seed: u64, n: usize) -> Self {
        let n = n as u32;
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            n,
            threshold: n.wrapping_neg() % n,
        }
    }

    #[inline(always)]
    fn accept(&self, half: u32) -> Option<usize> {
        let m = u64::from(half) * u64::from(self.n);
        ((m as u32) >= self.threshold).then_some((m >> 32) as usize)
    }

    /// Tallies `draws` indices into `counts`.
    fn fill_counts(&mut self, counts: &mut [u32], draws: usize) {
        let mut left = draws;
        while left >= 2 {
            let x = self.rng.next_u64();
            if let Some(i) = self.accept(x as u32) {
                counts[i] += 1;
                left -= 1;
            }
            if let Some(i) = self.accept((x >> 32) as u32) {
                counts[i] += 1;
                left -= 1;
            }
        }
        while left > 0 {
            let x = self.rng.next_u64();
            for half in [x as u32, (x >> 32) as u32] {
                if left > 0 {
                    if let Some(i) = self.accept(half) {
                        counts[i] += 1;
                        left -= 1;
                    }
                }
            }
        }
    }

    #[cfg(test)]
    fn indices(&mut self, draws: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(draws);
        while out.len() < draws {
            let x = self.rng.next_u64();
            for half in [x as u32, (x >> 32) as u32] {
                if out.len() < draws {
                    out.extend(self.accept(half));
                }
            }
        }
        out
    }
}

/// `Σ counts[i] · values[i]` over four interleaved accumulators.
#[inline]
fn weighted_sum(counts: &[u32], values: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = counts.chunks_exact(4).zip(values.chunks_exact(4));
    for (c, v) in chunks {
        for k in 0..4 {
            acc[k] += f64::from(c[k]) * v[k];
        }
    }
    let tail = counts.len() - counts.len() % 4;
    let rest: f64 = counts[tail..]
        .iter()
        .zip(&values[tail..])
        .map(|(c, v)| f64::from(*c) * v)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// Sum of the resampled values left after dropping `g` from each tail.
/// Boundaries are found with integer prefix counts so only the retained
/// range is touched in floating point.
#[inline]
fn trimmed_sum(counts: &[u32], values: &[f64], g: usize) -> f64 {
    let g = g as u32;
    let (mut lo, mut below) = (0, 0u32);
    while below + counts[lo] <= g {
        below += counts[lo];
        lo += 1;
    }
    let (mut hi, mut above) = (counts.len() - 1, 0u32);
    while above + counts[hi] <= g {
        above += counts[hi];
        hi -= 1;
    }
    let keep_lo = below + counts[lo] - g;
    let keep_hi = above + counts[hi] - g;
    if lo == hi {
        // both cuts fall inside one tied run
        let total: u32 = counts.iter().sum();
        return f64::from(total - 2 * g) * values[lo];
    }
    f64::from(keep_lo) * values[lo]
        + weighted_sum(&counts[lo + 1..hi], &values[lo + 1..hi])
        + f64::from(keep_hi) * values[hi]
}

/// Value at 0-based rank `k` of the resample.
#[inline]
fn rank_value(counts: &[u32], values: &[f64], k: usize) -> f64 {
    let mut seen = 0usize;
    for (c, v) in counts.iter().zip(values) {
        seen += *c as usize;
        if seen > k {
            return *v;
        }
    }
    unreachable!("rank beyond resample size")
}

/// Bootstrap distribution of `statistic`, in resample-index order.
pub fn bootstrap_distribution(data: &[f64], statistic: Statistic, n_resamples: usize, seed: u64) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("cannot resample an empty sample".into()));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidArgument("n_resamples must be at least 1".into()));
    }
    if data.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument("sample too large to resample".into()));
    }
    statistic.validate(data.len())?;
    check_finite(data)?;
    let sorted = sorted_copy(data);
    let pivot = statistic.evaluate_sorted(&sorted);
    let centered: Vec<f64> = sorted.iter().map(|v| v - pivot).collect();
    let n = sorted.len();

    let stats = (0..n_resamples)
        .into_par_iter()
        .map_init(
            || vec![0u32; n],
            |counts, r| {
                counts.fill(0);
                IndexSampler::new(stream_seed(seed, r as u64), n).fill_counts(counts, n);
                match statistic {
                    Statistic::TrimmedMean(trim) => {
                        let g = trim_count(n, trim);
                        pivot + trimmed_sum(counts, &centered, g) / (n - 2 * g) as f64
                    }
                    Statistic::Median => {
                        let (a, b) = if n % 2 == 1 {
                            let m = rank_value(counts, &centered, n / 2);
                            (m, m)
                        } else {
                            (
                                rank_value(counts, &centered, n / 2 - 1),
                                rank_value(counts, &centered, n / 2),
                            )
                        };
                        pivot + (a + (b - a) / 2.0)
                    }
                }
            },
        )
        .collect();
    Ok(stats)
}

/// Nearest-rank quantile of sorted values: the smallest value with at least
/// a fraction `q` of the distribution at or below it.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let x = q * n as f64;
    // absorb rounding noise in q * n before taking the ceiling
    let rank = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    } as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Estimate, percentile interval and two-sided bootstrap p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub n: usize,
    pub n_resamples: usize,
}

fn validate_conf(conf: f64) -> Result<()> {
    if !(conf > 0.0 && conf < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {conf} outside (0, 1)")));
    }
    Ok(())
}

pub fn summarize(estimate: f64, mut stats: Vec<f64>, conf: f64, n: usize) -> BootstrapCi {
    stats.sort_unstable_by(f64::total_cmp);
    let b = stats.len() as f64;
    let alpha = (1.0 - conf) / 2.0;
    let at_or_below = stats.partition_point(|&v| v <= 0.0) as f64 / b;
    let at_or_above = (stats.len() - stats.partition_point(|&v| v < 0.0)) as f64 / b;
    BootstrapCi {
        estimate,
        ci_low: nearest_rank(&stats, alpha),
        ci_high: nearest_rank(&stats, 1.0 - alpha),
        p: (2.0 * at_or_below.min(at_or_above)).min(1.0),
        n,
        n_resamples: stats.len(),
    }
}

/// Percentile bootstrap of the trimmed mean of paired differences.
pub fn bootstrap_ci(diffs: &[f64], n_resamples: usize, trim: f64, conf: f64, seed: u64) -> Result<BootstrapCi> {
    bootstrap_statistic(diffs, Statistic::TrimmedMean(trim), n_resamples, conf, seed)
}

pub fn bootstrap_statistic(
    data: &[f64],
    statistic: Statistic,
    n_resamples: usize,
    conf: f64,
    seed: u64,
) -> Result<BootstrapCi> {
    validate_conf(conf)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("no values to bootstrap".into()));
    }
    let estimate = statistic.evaluate(data)?;
    let stats = bootstrap_distribution(data, statistic, n_resamples, seed)?;
    Ok(summarize(estimate, stats, conf, data.len()))
}

/// One pairwise judgement: did the rater prefer the candidate image?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceVote {
    pub pair_id: String,
    pub chose_candidate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceCi {
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_votes: usize,
}

/// Selection rate of the candidate with a percentile bootstrap interval
/// resampled over individual votes.
pub fn preference_ci(votes: &[PreferenceVote], conf: f64, n_resamples: usize, seed: u64) -> Result<PreferenceCi> {
    if votes.is_empty() {
        return Err(Error::EmptyDataset("no votes".into()));
    }
    let outcomes: Vec<f64> = votes
        .iter()
        .map(|v| if v.chose_candidate { 1.0 } else { 0.0 })
        .collect();
    let ci = bootstrap_statistic(&outcomes, Statistic::TrimmedMean(0.0), n_resamples, conf, seed)?;
    Ok(PreferenceCi {
        rate: outcomes.iter().sum::<f64>() / outcomes.len() as f64,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        n_votes: votes.len(),
    })
}
