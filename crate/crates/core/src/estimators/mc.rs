//! Chunked, reproducible Monte Carlo reduction.
//!
//! Trials are split into fixed-size chunks, chunk `i` draws from the child
//! stream `"<label>/chunk-<i>"`, and per-chunk moments are merged in chunk
//! order. The result is bit-identical for any number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const CHUNK_TRIALS: usize = 256;

/// Running mean and sum of squared deviations (Welford / Chan).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 +=
            other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }
}

/// Mean of i.i.d. trials with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
    /// The unclamped mean; equals `mean` unless [`Self::clamped_nonnegative`]
    /// moved it.
    pub raw_mean: f64,
}

impl MCEstimate {
    pub fn from_moments(moments: &Moments, seed: u64) -> Self {
        let n = moments.count() as f64;
        Self {
            mean: moments.mean(),
            stderr: (moments.variance() / n).sqrt(),
            trials: moments.count() as usize,
            seed,
            raw_mean: moments.mean(),
        }
    }

    /// Clamps the reported mean at zero, keeping the raw value.
    pub fn clamped_nonnegative(mut self) -> Self {
        self.mean = self.raw_mean.max(0.0);
        self
    }

    /// `|mean - value| <= k * stderr`.
    pub fn within_sigma(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Runs `trials` independent trials, each writing `width` values, and returns
/// one estimate per output slot.
pub fn run_trials<F>(
    trials: usize,
    width: usize,
    rng: &SeededRng,
    trial: F,
) -> Result<Vec<MCEstimate>>
where
    F: Fn(&mut SeededRng, &mut [f64]) -> Result<()> + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidParameter(format!(
            "at least 2 trials are needed for a standard error (got {trials})"
        )));
    }
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let partials = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut local = rng.derive(&format!("chunk-{chunk}"));
            let count = CHUNK_TRIALS.min(trials - chunk * CHUNK_TRIALS);
            let mut moments = vec![Moments::default(); width];
            let mut out = vec![0.0; width];
            for _ in 0..count {
                trial(&mut local, &mut out)?;
                for (m, x) in moments.iter_mut().zip(&out) {
                    m.push(*x);
                }
            }
            Ok(moments)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = vec![Moments::default(); width];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(total
        .iter()
        .map(|m| MCEstimate::from_moments(m, rng.seed()))
        .collect())
}
