//! Generalization-error bounds assembled from per-sample mutual information.
//!
//! Every paradigm gets the same shape of bound: an average over training
//! samples of `psi*^{-1}(I(sample; output))`, negated with the plus-side
//! envelope for the lower bound and taken with the minus-side envelope for
//! the upper bound.

use serde::{Deserialize, Serialize};

use super::envelope::PsiEnvelope;
use crate::error::{Error, Result};
use crate::paradigms::ParticipationLog;

/// The two envelopes that control one user's loss tails.
#[derive(Clone, Debug)]
pub struct EnvelopePair {
    pub plus: PsiEnvelope,
    pub minus: PsiEnvelope,
}

impl EnvelopePair {
    pub fn new(plus: PsiEnvelope, minus: PsiEnvelope) -> Self {
        Self { plus, minus }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lower: f64,
    pub upper: f64,
    /// Closed-form generalization error, when one is known.
    pub analytic_gen: Option<f64>,
    /// The per-sample MI values the bound was built from, flattened.
    pub per_sample_mi: Vec<f64>,
    /// Free-form description of the configuration.
    pub config: String,
}

impl BoundReport {
    pub fn with_analytic_gen(mut self, gen: f64) -> Self {
        self.analytic_gen = Some(gen);
        self
    }

    pub fn with_config(mut self, config: impl Into<String>) -> Self {
        self.config = config.into();
        self
    }

    /// `lower <= gen <= upper`, when the analytic value is present.
    pub fn sandwiches(&self) -> Option<bool> {
        self.analytic_gen
            .map(|g| self.lower <= g && g <= self.upper)
    }
}

fn check_information(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(**v >= 0.0)) {
        Some(v) => Err(Error::NegativeInformation(*v)),
        None => Ok(()),
    }
}

fn weighted_bounds<'a>(
    blocks: impl Iterator<Item = (&'a [f64], &'a EnvelopePair)>,
    total: usize,
) -> Result<BoundReport> {
    let mut lower = 0.0;
    let mut upper = 0.0;
    let mut mi = Vec::new();
    for (values, pair) in blocks {
        check_information(values)?;
        for &u in values {
            lower -= pair.plus.dual_inverse(u)?;
            upper += pair.minus.dual_inverse(u)?;
        }
        mi.extend_from_slice(values);
    }
    let n = total as f64;
    Ok(BoundReport {
        lower: lower / n,
        upper: upper / n,
        analytic_gen: None,
        per_sample_mi: mi,
        config: String::new(),
    })
}

/// Single learner: `-(1/n) sum psi+*^{-1}(I_i) <= gen <= (1/n) sum psi-*^{-1}(I_i)`.
pub fn gen_bounds_centralized(
    mi_per_sample: &[f64],
    plus: &PsiEnvelope,
    minus: &PsiEnvelope,
) -> Result<BoundReport> {
    if mi_per_sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pair = EnvelopePair::new(plus.clone(), minus.clone());
    weighted_bounds(std::iter::once((mi_per_sample, &pair)), mi_per_sample.len())
}

/// `K` users, one MI row per user and one envelope pair per user; every
/// sample is weighted by `1/n` with `n = sum n_k`.
pub fn gen_bounds_distributed(
    mi: &[Vec<f64>],
    sizes: &[usize],
    envelopes: &[EnvelopePair],
) -> Result<BoundReport> {
    if mi.len() != sizes.len() || envelopes.len() != sizes.len() {
        return Err(Error::LengthMismatch(format!(
            "{} MI rows, {} sizes, {} envelope pairs",
            mi.len(),
            sizes.len(),
            envelopes.len()
        )));
    }
    for (k, (row, &n)) in mi.iter().zip(sizes).enumerate() {
        if row.len() != n {
            return Err(Error::LengthMismatch(format!(
                "user {k} has {} MI values but {n} samples",
                row.len()
            )));
        }
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    weighted_bounds(mi.iter().map(Vec::as_slice).zip(envelopes.iter()), total)
}

/// Bound at round `t` for one participation pattern.
///
/// `mi[i]` holds the MI values of the current-round samples of the `i`-th
/// member of the round's active set; `sizes` and `envelopes` are indexed by
/// user over all `K` users. Samples are weighted by `1 / n(t)`.
pub fn gen_bounds_federated(
    mi: &[Vec<f64>],
    participation: &ParticipationLog,
    round: usize,
    sizes: &[usize],
    envelopes: &[EnvelopePair],
) -> Result<BoundReport> {
    let active = participation.active_set(round)?;
    if sizes.len() != participation.users() || envelopes.len() != participation.users() {
        return Err(Error::LengthMismatch(format!(
            "{} users in the log but {} sizes and {} envelope pairs",
            participation.users(),
            sizes.len(),
            envelopes.len()
        )));
    }
    if mi.len() != active.len() {
        return Err(Error::LengthMismatch(format!(
            "{} MI rows for {} active users",
            mi.len(),
            active.len()
        )));
    }
    let active_sizes: Vec<usize> = active.iter().map(|&k| sizes[k]).collect();
    let active_envelopes: Vec<EnvelopePair> =
        active.iter().map(|&k| envelopes[k].clone()).collect();
    gen_bounds_distributed(mi, &active_sizes, &active_envelopes)
}

/// Averages per-pattern bounds, approximating the expectation over the
/// participation law when the patterns were drawn from it.
pub fn average_bound_reports(reports: &[BoundReport]) -> Result<BoundReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("no bound reports to average".into()))?;
    // Running means: identical inputs reproduce their value exactly.
    let (mut lower, mut upper) = (0.0, 0.0);
    for (i, r) in reports.iter().enumerate() {
        let w = 1.0 / (i + 1) as f64;
        lower += (r.lower - lower) * w;
        upper += (r.upper - upper) * w;
    }
    Ok(BoundReport {
        lower,
        upper,
        analytic_gen: first.analytic_gen,
        per_sample_mi: first.per_sample_mi.clone(),
        config: first.config.clone(),
    })
}
