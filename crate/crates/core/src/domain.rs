//! Gaussian priors, datasets, hypotheses and the squared-error risks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Isotropic Gaussian data distribution `N(mean, variance * I_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    variance: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidParameter(
                "prior dimension must be at least 1".into(),
            ));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior variance must be positive and finite (got {variance})"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("prior mean must be finite".into()));
        }
        Ok(Self { mean, variance })
    }

    /// `N(0, variance * I_dim)`.
    pub fn centered(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], variance)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A non-empty batch of `d`-dimensional samples held by one user.
///
/// `owner` is the zero-based user index and `batch` the round the samples
/// belong to; one-shot paradigms use batch 0, federated rounds start at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Vec<f64>>,
    owner: usize,
    batch: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, owner: usize, batch: usize) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "samples must have dimension at least 1".into(),
            ));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(Self {
            samples,
            owner,
            batch,
        })
    }

    /// One-dimensional dataset from scalars, convenient in tests and examples.
    pub fn from_scalars(values: &[f64], owner: usize, batch: usize) -> Result<Self> {
        Self::new(values.iter().map(|v| vec![*v]).collect(), owner, batch)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn sum(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        for s in &self.samples {
            for (a, x) in acc.iter_mut().zip(s) {
                *a += x;
            }
        }
        acc
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.sum().into_iter().map(|x| x / n).collect()
    }
}

/// A point in the hypothesis space, here `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis(Vec<f64>);

impl Hypothesis {
    pub fn new(value: Vec<f64>) -> Result<Self> {
        if value.is_empty() {
            return Err(Error::InvalidParameter(
                "hypothesis dimension must be at least 1".into(),
            ));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "hypothesis entries must be finite".into(),
            ));
        }
        Ok(Self(value))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn scalar(value: f64) -> Self {
        Self(vec![value])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Hypothesis) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A nonnegative real that may be `+inf`.
///
/// Privacy leakage of a non-private mechanism is infinite; keeping that case
/// as its own variant stops it from leaking into float arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            ExtendedReal::Infinite => None,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => f.write_str("inf"),
        }
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `||s - w||^2`.
pub fn squared_loss(sample: &[f64], w: &Hypothesis) -> Result<f64> {
    check_dims(w.dim(), sample.len())?;
    Ok(sample
        .iter()
        .zip(w.as_slice())
        .map(|(s, w)| (s - w) * (s - w))
        .sum())
}

/// Average squared loss over the dataset.
pub fn empirical_risk(data: &Dataset, w: &Hypothesis) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data.samples() {
        total += squared_loss(s, w)?;
    }
    Ok(total / data.len() as f64)
}

/// Expected squared loss under the prior: `d * sigma^2 + ||nu - w||^2`.
pub fn population_risk_gaussian(prior: &GaussianPrior, w: &Hypothesis) -> Result<f64> {
    check_dims(prior.dim(), w.dim())?;
    let bias: f64 = prior
        .mean()
        .iter()
        .zip(w.as_slice())
        .map(|(m, w)| (m - w) * (m - w))
        .sum();
    Ok(prior.dim() as f64 * prior.variance() + bias)
}

/// Draws `count` i.i.d. samples from the prior, tagged with owner and batch.
pub fn sample_batch(
    prior: &GaussianPrior,
    count: usize,
    owner: usize,
    batch: usize,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let sd = prior.variance().sqrt();
    let samples = (0..count)
        .map(|_| {
            prior
                .mean()
                .iter()
                .map(|m| m + sd * rng.standard_normal())
                .collect()
        })
        .collect();
    Dataset::new(samples, owner, batch)
}

/// Draws a single-user, single-batch dataset.
pub fn sample_dataset(prior: &GaussianPrior, count: usize, rng: &mut SeededRng) -> Result<Dataset> {
    sample_batch(prior, count, 0, 0, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prior_validation() {
        assert!(GaussianPrior::new(vec![0.0], 0.0).is_err());
        assert!(GaussianPrior::new(vec![], 1.0).is_err());
        assert!(GaussianPrior::new(vec![0.0], f64::NAN).is_err());
        assert_eq!(GaussianPrior::centered(3, 2.0).unwrap().dim(), 3);
    }

    #[test]
    fn dataset_rejects_ragged_and_empty() {
        assert_eq!(Dataset::new(vec![], 0, 0), Err(Error::EmptyDataset));
        assert!(matches!(
            Dataset::new(vec![vec![1.0, 2.0], vec![1.0]], 0, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn squared_loss_examples() {
        let w = Hypothesis::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(squared_loss(&[1.0, 2.0], &w).unwrap(), 5.0);
        assert_eq!(squared_loss(&[3.0], &Hypothesis::scalar(1.0)).unwrap(), 4.0);
        assert_eq!(squared_loss(&[0.0, 0.0], &w).unwrap(), 0.0);
        assert!(squared_loss(&[1.0], &w).is_err());
    }

    #[test]
    fn empirical_risk_examples() {
        let d = Dataset::from_scalars(&[0.0, 2.0], 0, 0).unwrap();
        assert_eq!(empirical_risk(&d, &Hypothesis::scalar(1.0)).unwrap(), 1.0);
        let d = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0, 0).unwrap();
        assert_eq!(empirical_risk(&d, &Hypothesis::zeros(2)).unwrap(), 1.0);
        let d = Dataset::from_scalars(&[4.0, 4.0, 4.0], 0, 0).unwrap();
        assert_eq!(empirical_risk(&d, &Hypothesis::scalar(4.0)).unwrap(), 0.0);
    }

    #[test]
    fn population_risk_examples() {
        let p = GaussianPrior::centered(5, 1.0).unwrap();
        assert_eq!(
            population_risk_gaussian(&p, &Hypothesis::zeros(5)).unwrap(),
            5.0
        );
        let p = GaussianPrior::centered(1, 2.0).unwrap();
        assert_eq!(
            population_risk_gaussian(&p, &Hypothesis::scalar(3.0)).unwrap(),
            11.0
        );
        assert!(population_risk_gaussian(&p, &Hypothesis::zeros(2)).is_err());
    }

    #[test]
    fn population_risk_matches_monte_carlo() {
        let prior = GaussianPrior::new(vec![0.5, -1.0], 1.5).unwrap();
        let w = Hypothesis::new(vec![1.0, 0.25]).unwrap();
        let mut rng = SeededRng::new(5, "pop-risk");
        let data = sample_dataset(&prior, 1_000_000, &mut rng).unwrap();
        let losses: Vec<f64> = data
            .samples()
            .iter()
            .map(|s| squared_loss(s, &w).unwrap())
            .collect();
        let n = losses.len() as f64;
        let mean = losses.iter().sum::<f64>() / n;
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let analytic = population_risk_gaussian(&prior, &w).unwrap();
        assert!((mean - analytic).abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn degenerate_variance_concentrates() {
        let prior = GaussianPrior::new(vec![2.0, -3.0], 1e-12).unwrap();
        let mut rng = SeededRng::new(1, "tiny");
        let data = sample_dataset(&prior, 3, &mut rng).unwrap();
        for s in data.samples() {
            assert!((s[0] - 2.0).abs() < 1e-4 && (s[1] + 3.0).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let prior = GaussianPrior::centered(3, 1.0).unwrap();
        let a = sample_dataset(&prior, 50, &mut SeededRng::new(7, "a")).unwrap();
        let b = sample_dataset(&prior, 50, &mut SeededRng::new(7, "a")).unwrap();
        let bits = |d: &Dataset| -> Vec<u64> {
            d.samples().iter().flatten().map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert!(sample_dataset(&prior, 0, &mut SeededRng::new(7, "a")).is_err());
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let prior = GaussianPrior::centered(1, 1.0).unwrap();
        let data = sample_dataset(&prior, 1_000_000, &mut SeededRng::new(2, "clt")).unwrap();
        assert!(data.mean()[0].abs() < 4.0 / 1000.0);
    }

    #[test]
    fn extended_real_display() {
        assert_eq!(ExtendedReal::Infinite.to_string(), "inf");
        assert_eq!(ExtendedReal::Finite(0.5).to_string(), "0.5");
    }

    fn vec2() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 3)
    }

    proptest! {
        #[test]
        fn loss_is_symmetric(s in vec2(), w in vec2()) {
            let a = squared_loss(&s, &Hypothesis::new(w.clone()).unwrap()).unwrap();
            let b = squared_loss(&w, &Hypothesis::new(s.clone()).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn singleton_risk_is_loss(s in vec2(), w in vec2()) {
            let w = Hypothesis::new(w).unwrap();
            let d = Dataset::new(vec![s.clone()], 0, 0).unwrap();
            prop_assert_eq!(empirical_risk(&d, &w).unwrap(), squared_loss(&s, &w).unwrap());
        }

        #[test]
        fn population_risk_floor(mean in vec2(), w in vec2(), var in 0.01f64..10.0) {
            let prior = GaussianPrior::new(mean.clone(), var).unwrap();
            let floor = 3.0 * var;
            let r = population_risk_gaussian(&prior, &Hypothesis::new(w).unwrap()).unwrap();
            prop_assert!(r >= floor);
            let at_mean = population_risk_gaussian(&prior, &Hypothesis::new(mean).unwrap()).unwrap();
            prop_assert_eq!(at_mean, floor);
        }
    }
}
