//! Paired percentile bootstrap over per-question metric deltas.
//!
//! Resampling draws from SplitMix64 seeded with the caller's seed. A draw
//! `x` maps to index `(x * n) >> 64` (128-bit multiply), which keeps the
//! schedule identical across platforms.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Mean of the raw deltas, in metric units (multiply by 100 for pp).
    pub mean_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_two_sided: f64,
    pub resamples: usize,
    pub seed: u64,
    pub n: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

pub fn win_tie_loss(deltas: &[f64]) -> (usize, usize, usize) {
    deltas.iter().fold((0, 0, 0), |(w, t, l), &d| {
        if d.abs() < TIE_TOLERANCE {
            (w, t + 1, l)
        } else if d > 0.0 {
            (w + 1, t, l)
        } else {
            (w, t, l + 1)
        }
    })
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// Nearest-rank percentile on an ascending slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn paired_bootstrap(deltas: &[f64], resamples: usize, seed: u64) -> Result<BootstrapReport> {
    let n = deltas.len();
    if n < 2 {
        return Err(Error::Validation(format!("bootstrap needs at least 2 deltas, got {n}")));
    }
    if resamples == 0 {
        return Err(Error::Validation("bootstrap needs at least one resample".into()));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let draws = (0..n).map(|_| {
            let i = ((rng.next_u64() as u128 * n as u128) >> 64) as usize;
            deltas[i]
        });
        means.push(mean(draws, n));
    }
    let le = means.iter().filter(|&&m| m <= 0.0).count() as f64 / resamples as f64;
    let ge = means.iter().filter(|&&m| m >= 0.0).count() as f64 / resamples as f64;
    let floor = 1.0 / resamples as f64;
    let p_two_sided = (2.0 * le.min(ge)).min(1.0).max(floor);
    means.sort_by(f64::total_cmp);
    let (wins, ties, losses) = win_tie_loss(deltas);
    Ok(BootstrapReport {
        mean_delta: mean(deltas.iter().copied(), n),
        ci_low: nearest_rank(&means, 0.025),
        ci_high: nearest_rank(&means, 0.975),
        p_two_sided,
        resamples,
        seed,
        n,
        wins,
        ties,
        losses,
    })
}
