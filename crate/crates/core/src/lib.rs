//! Information-theoretic analysis of centralized, distributed and federated
//! learning on the Gaussian mean estimation problem.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: Gaussian priors, datasets, hypotheses and the squared-error risks.
//! - [`paradigms`]: the three learning protocols (centralized ERM, one-shot
//!   distributed fusion, multi-round federated aggregation with random participation).
//! - [`bounds`]: cumulant-generating-function envelopes, their Legendre dual
//!   inverses, the mutual-information generalization bounds and the closed-form
//!   Gaussian expressions.
//! - [`estimators`]: linear coefficient tracking, exact Gaussian mutual information,
//!   and Monte Carlo estimators of generalization error and privacy leakage.
//!
//! All randomness flows through [`SeededRng`], so every result is reproducible
//! from a `(seed, label)` pair.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod paradigms;
pub mod rng;

pub use domain::{
    empirical_risk, population_risk_gaussian, sample_batch, sample_dataset, squared_loss, Dataset,
    ExtendedReal, GaussianPrior, Hypothesis,
};
pub use error::{Error, Result};
pub use rng::SeededRng;
