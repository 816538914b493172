//! Privacy leakage of federated aggregation under random participation.
//!
//! Target quantity: `I(X; W_hat^(T) | C)` where `X = S_{k,j*}^(t*)` is one
//! sample of user `k` and `C` is every other sample of that user. Given a
//! participation history the output is linear in the data, so conditionally
//! on `(X, C)` it is Gaussian:
//!
//! ```text
//! W_hat | h, X, C ~ N(a_h X + m_h(C), v_h I_d)
//! W_hat | h, C    ~ N(a_h nu_k + m_h(C), (v_h + a_h^2 sigma_k^2) I_d)
//! ```
//!
//! with `a_h` the target's weight, `m_h(C)` the known part (user `k`'s other
//! samples plus the other users' means) and `v_h` the other users' variance.
//! Averaging over histories makes both laws finite Gaussian mixtures. The
//! estimator samples histories from their uniform law, runs the protocol on
//! fresh data, and averages `ln p(W_hat | X, C) - ln p(W_hat | C)` with the
//! exact mixture densities.
//!
//! Mixture components are built round by round: round `tau` contributes
//! independently through its active set, and sets that produce the same
//! Gaussian parameters are merged before the rounds are combined.

use crate::domain::{sample_batch, Dataset, ExtendedReal, Hypothesis};
use crate::error::{Error, Result};
use crate::paradigms::{federated_round, sample_participants, FederatedConfig};
use crate::rng::SeededRng;

use super::coefficients::{federated_sample_weight, SampleRef};
use super::mc::{run_trials, MCEstimate};

/// Upper limit on `C(K, K_a)` active sets enumerated per round.
pub const MAX_ACTIVE_SETS: usize = 200_000;
/// Upper limit on mixture components after combining rounds.
pub const MAX_COMPONENTS: usize = 1 << 16;
pub const MIN_LEAKAGE_TRIALS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakageMcOptions {
    /// Independent participation histories; each is one Monte Carlo unit.
    pub pattern_trials: usize,
    /// Data draws averaged within each history.
    pub entropy_trials: usize,
    /// Fail with [`Error::NonConvergence`] if the standard error ends above this.
    pub max_stderr: Option<f64>,
}

impl Default for LeakageMcOptions {
    fn default() -> Self {
        Self {
            pattern_trials: 20_000,
            entropy_trials: 50,
            max_stderr: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LeakageEstimate {
    /// Some history leaves the output a deterministic function of the
    /// target user's data.
    Infinite,
    Finite(MCEstimate),
}

impl LeakageEstimate {
    pub fn value(&self) -> ExtendedReal {
        match self {
            LeakageEstimate::Infinite => ExtendedReal::Infinite,
            LeakageEstimate::Finite(e) => ExtendedReal::Finite(e.mean),
        }
    }

    pub fn estimate(&self) -> Option<&MCEstimate> {
        match self {
            LeakageEstimate::Infinite => None,
            LeakageEstimate::Finite(e) => Some(e),
        }
    }
}

/// One round's contribution for one class of active sets.
#[derive(Clone, Debug)]
struct RoundComponent {
    prob: f64,
    user_active: bool,
    /// Weight of each of the target user's round samples in `W_hat^(T)`.
    weight: f64,
    /// Mean contribution of the other active users.
    shift: Vec<f64>,
    /// Per-coordinate variance contributed by the other active users.
    variance: f64,
}

impl RoundComponent {
    fn same_law(&self, other: &RoundComponent) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        self.user_active == other.user_active
            && close(self.weight, other.weight)
            && close(self.variance, other.variance)
            && self
                .shift
                .iter()
                .zip(&other.shift)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())))
    }
}

/// A mixture component over a whole history.
#[derive(Clone, Debug)]
struct Component {
    log_prob: f64,
    /// Rounds (0-based) in which the target user is active, with the weight
    /// of that round's samples.
    user_rounds: Vec<(usize, f64)>,
    target_coefficient: f64,
    shift: Vec<f64>,
    variance: f64,
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Rightmost position that can still advance.
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn round_components(
    config: &FederatedConfig,
    user: usize,
    tau: usize,
) -> Result<Vec<RoundComponent>> {
    let users = config.user_count();
    let active = config.active_per_round();
    let count = binomial(users, active)
        .filter(|c| *c <= MAX_ACTIVE_SETS)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "C({users}, {active}) active sets exceed the enumeration limit {MAX_ACTIVE_SETS}"
            ))
        })?;
    let sizes = config.batch_size_per_user();
    let priors = config.priors();
    let dim = config.dim();
    let prob = 1.0 / count as f64;
    let mut out: Vec<RoundComponent> = Vec::new();
    for_each_subset(users, active, |set| {
        let n_tau: usize = set.iter().map(|&i| sizes[i]).sum();
        let weight = federated_sample_weight(tau, config.rounds(), n_tau);
        let weight = num_traits::ToPrimitive::to_f64(&weight).unwrap_or(f64::NAN);
        let mut shift = vec![0.0; dim];
        let mut variance = 0.0;
        for &i in set.iter().filter(|&&i| i != user) {
            let n_i = sizes[i] as f64;
            for (s, m) in shift.iter_mut().zip(priors[i].mean()) {
                *s += weight * n_i * m;
            }
            variance += weight * weight * n_i * priors[i].variance();
        }
        let candidate = RoundComponent {
            prob,
            user_active: set.contains(&user),
            weight,
            shift,
            variance,
        };
        match out.iter_mut().find(|c| c.same_law(&candidate)) {
            Some(existing) => existing.prob += prob,
            None => out.push(candidate),
        }
    });
    Ok(out)
}

fn build_components(config: &FederatedConfig, target: SampleRef) -> Result<Vec<Component>> {
    let dim = config.dim();
    let mut components = vec![Component {
        log_prob: 0.0,
        user_rounds: Vec::new(),
        target_coefficient: 0.0,
        shift: vec![0.0; dim],
        variance: 0.0,
    }];
    for tau in 1..=config.rounds() {
        let per_round = round_components(config, target.user, tau)?;
        if components.len() * per_round.len() > MAX_COMPONENTS {
            return Err(Error::InvalidParameter(format!(
                "mixture would need more than {MAX_COMPONENTS} components; reduce T or K"
            )));
        }
        let mut next = Vec::with_capacity(components.len() * per_round.len());
        for base in &components {
            for rc in &per_round {
                let mut c = base.clone();
                c.log_prob += rc.prob.ln();
                if rc.user_active {
                    c.user_rounds.push((tau - 1, rc.weight));
                    if tau == target.round {
                        c.target_coefficient = rc.weight;
                    }
                }
                for (s, x) in c.shift.iter_mut().zip(&rc.shift) {
                    *s += x;
                }
                c.variance += rc.variance;
                next.push(c);
            }
        }
        components = next;
    }
    Ok(components)
}

fn log_normal_isotropic(x: &[f64], mean: &[f64], variance: f64) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * x.len() as f64 * (std::f64::consts::TAU * variance).ln() - sq / (2.0 * variance)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Estimates `I(S_{k,j*}^(t*); W_hat^(T) | S_k^{-j*})` under uniform random
/// participation. `target.round` is 1-based.
pub fn privacy_leakage_federated_mc(
    config: &FederatedConfig,
    target: SampleRef,
    options: &LeakageMcOptions,
    rng: &SeededRng,
) -> Result<LeakageEstimate> {
    if target.user >= config.user_count() {
        return Err(Error::InvalidParameter(format!(
            "user {} out of range",
            target.user
        )));
    }
    if target.round == 0 || target.round > config.rounds() {
        return Err(Error::RoundOutOfRange {
            round: target.round,
            rounds: config.rounds(),
        });
    }
    let n_user = config.batch_size_per_user()[target.user];
    if target.index >= n_user {
        return Err(Error::InvalidParameter(format!(
            "sample index {} out of range for batch size {n_user}",
            target.index
        )));
    }
    if options.pattern_trials < MIN_LEAKAGE_TRIALS || options.entropy_trials == 0 {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_LEAKAGE_TRIALS} pattern trials and one entropy trial"
        )));
    }

    let components = build_components(config, target)?;
    if components.iter().any(|c| c.variance == 0.0) {
        return Ok(LeakageEstimate::Infinite);
    }

    let dim = config.dim();
    let rounds = config.rounds();
    let user_prior = &config.priors()[target.user];
    let target_mean = user_prior.mean();
    let target_var = user_prior.variance();

    let unit = |r: &mut SeededRng, out: &mut [f64]| -> Result<()> {
        let history = (0..rounds)
            .map(|_| sample_participants(config.user_count(), config.active_per_round(), r))
            .collect::<Result<Vec<_>>>()?;
        let mut numerators = vec![0.0; components.len()];
        let mut denominators = vec![0.0; components.len()];
        let mut mean = vec![0.0; dim];
        let mut total = 0.0;
        for _ in 0..options.entropy_trials {
            // The target user's batches for every round, active or not.
            let own: Vec<Dataset> = (1..=rounds)
                .map(|t| sample_batch(user_prior, n_user, target.user, t, r))
                .collect::<Result<_>>()?;
            let x = own[target.round - 1].samples()[target.index].clone();
            let known_sums: Vec<Vec<f64>> = own
                .iter()
                .enumerate()
                .map(|(i, batch)| {
                    let mut s = batch.sum();
                    if i + 1 == target.round {
                        for (a, v) in s.iter_mut().zip(&x) {
                            *a -= v;
                        }
                    }
                    s
                })
                .collect();

            let mut global = Hypothesis::zeros(dim);
            for (t0, set) in history.iter().enumerate() {
                let t = t0 + 1;
                let batches = set
                    .iter()
                    .map(|&k| {
                        if k == target.user {
                            Ok(own[t0].clone())
                        } else {
                            sample_batch(
                                &config.priors()[k],
                                config.batch_size_per_user()[k],
                                k,
                                t,
                                r,
                            )
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                global = federated_round(&global, t, &batches, set)?.global;
            }
            let w = global.as_slice();

            for (i, c) in components.iter().enumerate() {
                mean.copy_from_slice(&c.shift);
                for &(round, weight) in &c.user_rounds {
                    for (m, s) in mean.iter_mut().zip(&known_sums[round]) {
                        *m += weight * s;
                    }
                }
                let a = c.target_coefficient;
                let with_x: Vec<f64> = mean.iter().zip(&x).map(|(m, xv)| m + a * xv).collect();
                numerators[i] = c.log_prob + log_normal_isotropic(w, &with_x, c.variance);
                let marginal: Vec<f64> = mean
                    .iter()
                    .zip(target_mean)
                    .map(|(m, mu)| m + a * mu)
                    .collect();
                denominators[i] = c.log_prob
                    + log_normal_isotropic(w, &marginal, c.variance + a * a * target_var);
            }
            total += log_sum_exp(&numerators) - log_sum_exp(&denominators);
        }
        out[0] = total / options.entropy_trials as f64;
        Ok(())
    };

    let estimate = run_trials(options.pattern_trials, 1, rng, unit)?[0].clamped_nonnegative();
    if let Some(limit) = options.max_stderr {
        if !(estimate.stderr <= limit) {
            return Err(Error::NonConvergence(format!(
                "leakage stderr {} above {limit} after {} histories x {} draws (mean {})",
                estimate.stderr, options.pattern_trials, options.entropy_trials, estimate.raw_mean
            )));
        }
    }
    Ok(LeakageEstimate::Finite(estimate))
}
