//! Streaming Monte-Carlo statistics and a deterministic parallel runner.
//!
//! Ensembles run one independent path (or field) per index with a seed
//! derived from `(master_seed, label, index)`. Work is split into fixed-size
//! chunks; chunks may execute on any number of worker threads, but partial
//! accumulators are merged in chunk order, so the result is bit-identical
//! for any worker count.

use rayon::prelude::*;

/// Welford accumulator for count / mean / second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct McAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl McAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    /// Standard error of the mean, sqrt(m2 / (n (n-1))).
    pub fn standard_error(&self) -> f64 {
        if self.count > 1 {
            (self.m2 / (self.count as f64 * (self.count - 1) as f64)).sqrt()
        } else {
            0.0
        }
    }

    /// Chan et al. pairwise merge. Associative up to floating-point rounding;
    /// the runner always merges in fixed chunk order.
    pub fn merge(self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        McAccumulator {
            count: self.count + other.count,
            mean: self.mean + delta * n2 / n,
            m2: self.m2 + other.m2 + delta * delta * n1 * n2 / n,
        }
    }
}

/// Summary of a Monte-Carlo estimate against a closed-form target.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    pub target: f64,
    /// Studentized deviation (mean - target) / stderr; zero when stderr is 0
    /// and the mean hits the target exactly.
    pub z_score: f64,
}

impl McEstimate {
    pub fn from_accumulator(acc: &McAccumulator, target: f64) -> Self {
        let mean = acc.mean();
        let stderr = acc.standard_error();
        let z_score = if stderr > 0.0 {
            (mean - target) / stderr
        } else if mean == target {
            0.0
        } else {
            f64::INFINITY * (mean - target).signum()
        };
        McEstimate {
            n: acc.count(),
            mean,
            stderr,
            target,
            z_score,
        }
    }

    pub fn within_sigmas(&self, sigmas: f64) -> bool {
        self.z_score.abs() <= sigmas
    }
}

/// SplitMix64 avalanche step.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives a per-item seed from a master seed, a label, and the item index.
/// Stable across platforms and runs.
pub fn derive_seed(master_seed: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(master_seed);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ index)
}

const CHUNK: u64 = 256;

/// Runs `f(index)` for indices `0..n` in parallel and folds the samples into
/// one accumulator. Chunks of 256 indices are processed independently and
/// merged in index order: the result does not depend on the worker count.
pub fn run_parallel<F>(n: u64, f: F) -> McAccumulator
where
    F: Fn(u64) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<McAccumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = McAccumulator::new();
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            for i in lo..hi {
                acc.push(f(i));
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(McAccumulator::new(), McAccumulator::merge)
}

/// Like [`run_parallel`] but collects every per-index value (in index order)
/// for experiments that need the raw samples.
pub fn collect_parallel<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let mut chunks: Vec<(u64, Vec<T>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            (c, (lo..hi).map(&f).collect())
        })
        .collect();
    chunks.sort_by_key(|(c, _)| *c);
    chunks.into_iter().flat_map(|(_, v)| v).collect()
}
