//! Centralized, distributed and federated learning protocols for the
//! squared-error mean estimation problem.
//!
//! User indices are zero-based. Federated rounds are numbered from 1; the
//! global model before round 1 is the zero hypothesis, which the update rule
//! never reads because its weight `(t - 1) / t` vanishes at `t = 1`.

use serde::{Deserialize, Serialize};

use crate::domain::{sample_batch, Dataset, GaussianPrior, Hypothesis};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

fn common_dim(priors: &[GaussianPrior]) -> Result<usize> {
    let dim = priors
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one user is required".into()))?
        .dim();
    if let Some(p) = priors.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.dim(),
        });
    }
    Ok(dim)
}

fn check_sizes(priors: &[GaussianPrior], sizes: &[usize]) -> Result<()> {
    if priors.len() != sizes.len() {
        return Err(Error::LengthMismatch(format!(
            "{} priors but {} sample sizes",
            priors.len(),
            sizes.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidParameter(
            "every user needs at least one sample".into(),
        ));
    }
    Ok(())
}

/// A single learner with `samples` i.i.d. draws from `prior`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralizedConfig {
    pub prior: GaussianPrior,
    pub samples: usize,
}

impl CentralizedConfig {
    pub fn new(prior: GaussianPrior, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidParameter(
                "sample count must be at least 1".into(),
            ));
        }
        Ok(Self { prior, samples })
    }
}

/// `K` users, user `k` holding `n_k` samples from its own prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributedConfig {
    priors: Vec<GaussianPrior>,
    samples_per_user: Vec<usize>,
}

impl DistributedConfig {
    pub fn new(priors: Vec<GaussianPrior>, samples_per_user: Vec<usize>) -> Result<Self> {
        common_dim(&priors)?;
        check_sizes(&priors, &samples_per_user)?;
        Ok(Self {
            priors,
            samples_per_user,
        })
    }

    /// `users` identical users with `N(0, variance * I_dim)` data.
    pub fn symmetric(users: usize, samples: usize, dim: usize, variance: f64) -> Result<Self> {
        let prior = GaussianPrior::centered(dim, variance)?;
        Self::new(vec![prior; users], vec![samples; users])
    }

    pub fn user_count(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[GaussianPrior] {
        &self.priors
    }

    pub fn samples_per_user(&self) -> &[usize] {
        &self.samples_per_user
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_user.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.priors[0].dim()
    }
}

/// Multi-round protocol parameters. `K_a` is constant across rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedConfig {
    priors: Vec<GaussianPrior>,
    batch_size_per_user: Vec<usize>,
    rounds: usize,
    active_per_round: usize,
}

impl FederatedConfig {
    pub fn new(
        priors: Vec<GaussianPrior>,
        batch_size_per_user: Vec<usize>,
        rounds: usize,
        active_per_round: usize,
    ) -> Result<Self> {
        common_dim(&priors)?;
        check_sizes(&priors, &batch_size_per_user)?;
        if rounds == 0 {
            return Err(Error::InvalidParameter(
                "at least one round is required".into(),
            ));
        }
        if active_per_round == 0 || active_per_round > priors.len() {
            return Err(Error::InvalidParameter(format!(
                "active users per round must lie in 1..={} (got {active_per_round})",
                priors.len()
            )));
        }
        Ok(Self {
            priors,
            batch_size_per_user,
            rounds,
            active_per_round,
        })
    }

    pub fn symmetric(
        users: usize,
        batch: usize,
        rounds: usize,
        active: usize,
        dim: usize,
        variance: f64,
    ) -> Result<Self> {
        let prior = GaussianPrior::centered(dim, variance)?;
        Self::new(vec![prior; users], vec![batch; users], rounds, active)
    }

    pub fn user_count(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[GaussianPrior] {
        &self.priors
    }

    pub fn batch_size_per_user(&self) -> &[usize] {
        &self.batch_size_per_user
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn active_per_round(&self) -> usize {
        self.active_per_round
    }

    pub fn dim(&self) -> usize {
        self.priors[0].dim()
    }

    /// Same users, different horizon or participation.
    pub fn with_schedule(&self, rounds: usize, active_per_round: usize) -> Result<Self> {
        Self::new(
            self.priors.clone(),
            self.batch_size_per_user.clone(),
            rounds,
            active_per_round,
        )
    }

    /// The one-shot configuration with the same users and per-user sizes.
    pub fn as_distributed(&self) -> DistributedConfig {
        DistributedConfig {
            priors: self.priors.clone(),
            samples_per_user: self.batch_size_per_user.clone(),
        }
    }

    /// The participation log in which every user is active in every round.
    pub fn full_participation(&self) -> ParticipationLog {
        let all: Vec<usize> = (0..self.user_count()).collect();
        ParticipationLog {
            users: self.user_count(),
            active: self.user_count(),
            rounds: vec![all; self.rounds],
        }
    }
}

/// Any of the three paradigms, for code that dispatches on the protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParadigmConfig {
    Centralized(CentralizedConfig),
    Distributed(DistributedConfig),
    Federated(FederatedConfig),
}

impl ParadigmConfig {
    /// Per-user priors (a single entry for the centralized paradigm).
    pub fn priors(&self) -> Vec<GaussianPrior> {
        match self {
            ParadigmConfig::Centralized(c) => vec![c.prior.clone()],
            ParadigmConfig::Distributed(c) => c.priors.clone(),
            ParadigmConfig::Federated(c) => c.priors.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParadigmConfig::Centralized(c) => c.prior.dim(),
            ParadigmConfig::Distributed(c) => c.dim(),
            ParadigmConfig::Federated(c) => c.dim(),
        }
    }
}

/// Realized active sets, one sorted list per round (index 0 is round 1).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationLog {
    users: usize,
    active: usize,
    rounds: Vec<Vec<usize>>,
}

impl ParticipationLog {
    pub fn new(users: usize, active: usize, rounds: Vec<Vec<usize>>) -> Result<Self> {
        let log = Self {
            users,
            active,
            rounds,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, set) in self.rounds.iter().enumerate() {
            if set.len() != self.active {
                return Err(Error::Participation(format!(
                    "round {} has {} active users, expected {}",
                    i + 1,
                    set.len(),
                    self.active
                )));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Participation(format!(
                    "round {} active set is not strictly increasing",
                    i + 1
                )));
            }
            if set.iter().any(|&k| k >= self.users) {
                return Err(Error::Participation(format!(
                    "round {} names a user outside 0..{}",
                    i + 1,
                    self.users
                )));
            }
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn active_per_round(&self) -> usize {
        self.active
    }

    /// Active set of round `t` (1-based).
    pub fn active_set(&self, t: usize) -> Result<&[usize]> {
        if t == 0 || t > self.rounds.len() {
            return Err(Error::RoundOutOfRange {
                round: t,
                rounds: self.rounds.len(),
            });
        }
        Ok(&self.rounds[t - 1])
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.rounds
    }

    pub fn is_active(&self, user: usize, t: usize) -> bool {
        self.active_set(t)
            .map(|s| s.binary_search(&user).is_ok())
            .unwrap_or(false)
    }

    /// Checks the log against a configuration's user count, `K_a` and horizon.
    pub fn check_against(&self, config: &FederatedConfig) -> Result<()> {
        if self.users != config.user_count()
            || self.active != config.active_per_round()
            || self.rounds.len() != config.rounds()
        {
            return Err(Error::Participation(format!(
                "log is (K={}, K_a={}, T={}) but configuration is (K={}, K_a={}, T={})",
                self.users,
                self.active,
                self.rounds.len(),
                config.user_count(),
                config.active_per_round(),
                config.rounds()
            )));
        }
        self.validate()
    }
}

/// Empirical risk minimizer of the squared loss: the sample mean.
pub fn centralized_erm(data: &Dataset) -> Result<Hypothesis> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Hypothesis::new(data.mean())
}

/// A user's local learner; the same estimator as [`centralized_erm`].
pub fn local_erm(data: &Dataset) -> Result<Hypothesis> {
    centralized_erm(data)
}

/// `sum_k weight_k * model_k`, with weights summing to one.
pub fn fuse_weighted_average(models: &[Hypothesis], weights: &[f64]) -> Result<Hypothesis> {
    if models.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} models but {} weights",
            models.len(),
            weights.len()
        )));
    }
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to fuse".into()))?;
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "fusion weights must be nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightsNotNormalized(total));
    }
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for (m, w) in models.iter().zip(weights) {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
        for (a, x) in acc.iter_mut().zip(m.as_slice()) {
            *a += w * x;
        }
    }
    Hypothesis::new(acc)
}

/// Local ERM on every dataset followed by `n_k / n` weighted fusion.
pub fn fit_distributed(datasets: &[Dataset]) -> Result<Hypothesis> {
    let total: usize = datasets.iter().map(Dataset::len).sum();
    let models = datasets.iter().map(local_erm).collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = datasets
        .iter()
        .map(|d| d.len() as f64 / total as f64)
        .collect();
    fuse_weighted_average(&models, &weights)
}

/// Samples every user's dataset, then runs [`fit_distributed`].
pub fn run_distributed(
    config: &DistributedConfig,
    rng: &mut SeededRng,
) -> Result<(Hypothesis, Vec<Dataset>)> {
    let datasets = config
        .priors
        .iter()
        .zip(&config.samples_per_user)
        .enumerate()
        .map(|(k, (prior, &n))| sample_batch(prior, n, k, 0, rng))
        .collect::<Result<Vec<_>>>()?;
    let global = fit_distributed(&datasets)?;
    Ok((global, datasets))
}

/// Uniform `active`-subset of `0..users`, returned sorted.
pub fn sample_participants(users: usize, active: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if active == 0 || active > users {
        return Err(Error::InvalidParameter(format!(
            "cannot choose {active} active users out of {users}"
        )));
    }
    // Partial Fisher-Yates.
    let mut pool: Vec<usize> = (0..users).collect();
    for i in 0..active {
        let j = i + rng.below(users - i);
        pool.swap(i, j);
    }
    let mut chosen = pool[..active].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Output of one federated round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutput {
    pub global: Hypothesis,
    /// `(user, W_k^(t))` for each active user, in active-set order.
    pub locals: Vec<(usize, Hypothesis)>,
}

/// One round of iterative model aggregation.
///
/// Each active user computes `W_k = sum(batch) / (t n_k) + (t - 1)/t * prev`
/// and the server fuses them with weights `n_k / n(t)`. `batches` must hold
/// exactly one batch for each member of `active`, tagged with round `t`.
pub fn federated_round(
    prev_global: &Hypothesis,
    t: usize,
    batches: &[Dataset],
    active: &[usize],
) -> Result<RoundOutput> {
    if t == 0 {
        return Err(Error::InvalidParameter("rounds are numbered from 1".into()));
    }
    if batches.len() != active.len() {
        return Err(Error::Participation(format!(
            "{} batches supplied for {} active users",
            batches.len(),
            active.len()
        )));
    }
    let mut owners: Vec<usize> = batches.iter().map(Dataset::owner).collect();
    owners.sort_unstable();
    let mut expected = active.to_vec();
    expected.sort_unstable();
    if owners != expected {
        return Err(Error::Participation(format!(
            "batch owners {owners:?} do not match active set {expected:?}"
        )));
    }
    if let Some(b) = batches.iter().find(|b| b.batch() != t) {
        return Err(Error::Participation(format!(
            "batch of user {} is tagged round {}, expected {t}",
            b.owner(),
            b.batch()
        )));
    }
    let dim = prev_global.dim();
    let carry = (t - 1) as f64 / t as f64;
    let round_total: usize = batches.iter().map(Dataset::len).sum();

    let mut locals = Vec::with_capacity(batches.len());
    let mut weights = Vec::with_capacity(batches.len());
    for batch in batches {
        if batch.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: batch.dim(),
            });
        }
        let scale = 1.0 / (t as f64 * batch.len() as f64);
        let local: Vec<f64> = batch
            .sum()
            .iter()
            .zip(prev_global.as_slice())
            .map(|(s, g)| scale * s + carry * g)
            .collect();
        locals.push((batch.owner(), Hypothesis::new(local)?));
        weights.push(batch.len() as f64 / round_total as f64);
    }
    let models: Vec<Hypothesis> = locals.iter().map(|(_, h)| h.clone()).collect();
    let global = fuse_weighted_average(&models, &weights)?;
    Ok(RoundOutput { global, locals })
}

/// Everything produced by a federated run.
#[derive(Clone, Debug, PartialEq)]
pub struct FederatedTrajectory {
    /// `W_hat^(1) .. W_hat^(T)`.
    pub global_models: Vec<Hypothesis>,
    /// Per round, `(user, W_k^(t))` for the active users.
    pub local_models: Vec<Vec<(usize, Hypothesis)>>,
    pub participation: ParticipationLog,
    /// Per round, the batches of the active users (inactive users draw nothing).
    pub batches: Vec<Vec<Dataset>>,
}

impl FederatedTrajectory {
    pub fn final_model(&self) -> &Hypothesis {
        self.global_models
            .last()
            .expect("trajectory has at least one round")
    }

    /// All batches of all rounds, flattened.
    pub fn all_batches(&self) -> impl Iterator<Item = &Dataset> {
        self.batches.iter().flatten()
    }
}

/// Runs `T` rounds. Each round draws the active set first and then one fresh
/// batch per active user, in increasing user order, from the same stream.
pub fn run_federated(config: &FederatedConfig, rng: &mut SeededRng) -> Result<FederatedTrajectory> {
    let mut global = Hypothesis::zeros(config.dim());
    let mut global_models = Vec::with_capacity(config.rounds);
    let mut local_models = Vec::with_capacity(config.rounds);
    let mut sets = Vec::with_capacity(config.rounds);
    let mut all_batches = Vec::with_capacity(config.rounds);

    for t in 1..=config.rounds {
        let active = sample_participants(config.user_count(), config.active_per_round, rng)?;
        let batches = active
            .iter()
            .map(|&k| sample_batch(&config.priors[k], config.batch_size_per_user[k], k, t, rng))
            .collect::<Result<Vec<_>>>()?;
        let out = federated_round(&global, t, &batches, &active)?;
        global = out.global.clone();
        global_models.push(out.global);
        local_models.push(out.locals);
        sets.push(active);
        all_batches.push(batches);
    }

    Ok(FederatedTrajectory {
        global_models,
        local_models,
        participation: ParticipationLog::new(config.user_count(), config.active_per_round, sets)?,
        batches: all_batches,
    })
}
