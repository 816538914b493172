//! Exact linear representation of aggregated models.
//!
//! Every aggregator in this crate is linear in the raw samples, so the output
//! can be written `W_hat = sum_{k,t,j} c_{k,t,j} S_{k,j}^(t) + constant`. The
//! coefficients are tracked as exact rationals by replaying the protocol's
//! update rules symbolically. With Gaussian data, `W_hat` and any sample are
//! jointly Gaussian and mutual information reduces to a variance ratio.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, ExtendedReal, Hypothesis};
use crate::error::{Error, Result};
use crate::paradigms::{FederatedConfig, ParadigmConfig, ParticipationLog};

/// Address of one raw sample: user, round (0 for one-shot paradigms), index
/// within the batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleRef {
    pub user: usize,
    pub round: usize,
    pub index: usize,
}

impl SampleRef {
    pub fn new(user: usize, round: usize, index: usize) -> Self {
        Self { user, round, index }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearCoefficientMap {
    coefficients: BTreeMap<SampleRef, BigRational>,
    constant: Vec<f64>,
}

fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl LinearCoefficientMap {
    /// Coefficient of a sample; zero when the sample does not enter the output.
    pub fn coefficient(&self, sample: &SampleRef) -> f64 {
        self.coefficients.get(sample).map_or(0.0, to_f64)
    }

    pub fn exact(&self, sample: &SampleRef) -> Option<&BigRational> {
        self.coefficients.get(sample)
    }

    pub fn constant(&self) -> &[f64] {
        &self.constant
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleRef, f64)> {
        self.coefficients.iter().map(|(k, v)| (k, to_f64(v)))
    }

    /// Exact sum of all coefficients.
    pub fn total(&self) -> BigRational {
        self.coefficients
            .values()
            .fold(BigRational::zero(), |acc, c| acc + c)
    }

    /// Applies the map to raw samples, looked up by `(owner, batch)` of the
    /// given datasets.
    pub fn reconstruct(&self, datasets: &[Dataset]) -> Result<Hypothesis> {
        let by_key: HashMap<(usize, usize), &Dataset> = datasets
            .iter()
            .map(|d| ((d.owner(), d.batch()), d))
            .collect();
        let mut acc = self.constant.clone();
        for (r, c) in &self.coefficients {
            let sample = by_key
                .get(&(r.user, r.round))
                .and_then(|d| d.samples().get(r.index))
                .ok_or_else(|| {
                    Error::LengthMismatch(format!(
                        "no sample for user {} round {} index {}",
                        r.user, r.round, r.index
                    ))
                })?;
            if sample.len() != acc.len() {
                return Err(Error::DimensionMismatch {
                    expected: acc.len(),
                    actual: sample.len(),
                });
            }
            let c = to_f64(c);
            for (a, x) in acc.iter_mut().zip(sample) {
                *a += c * x;
            }
        }
        Hypothesis::new(acc)
    }
}

/// Weight of a round-`tau` sample of a user in the final model after
/// `final_round` rounds, with `n_tau` samples active in round `tau`.
///
/// Replays the update: the user's local model puts `1/(tau n_k)` on the
/// sample, fusion multiplies by `n_k / n_tau`, and each later round `s`
/// carries the previous global model with factor `(s - 1)/s`. The result
/// equals `1 / (final_round * n_tau)`.
pub fn federated_sample_weight(tau: usize, final_round: usize, n_tau: usize) -> BigRational {
    let mut w = ratio(1, tau * n_tau);
    for s in (tau + 1)..=final_round {
        w *= ratio(s - 1, s);
    }
    w
}

fn one_shot_map(sizes: &[usize], dim: usize) -> LinearCoefficientMap {
    let total: usize = sizes.iter().sum();
    let mut coefficients = BTreeMap::new();
    for (k, &nk) in sizes.iter().enumerate() {
        // Fusion weight n_k / n times the local sample-mean weight 1 / n_k.
        let c = ratio(nk, total) * ratio(1, nk);
        for i in 0..nk {
            coefficients.insert(SampleRef::new(k, 0, i), c.clone());
        }
    }
    LinearCoefficientMap {
        coefficients,
        constant: vec![0.0; dim],
    }
}

/// Coefficients of `W_hat^(round)` for a federated run with the given log.
pub fn federated_coefficients(
    config: &FederatedConfig,
    participation: &ParticipationLog,
    round: usize,
) -> Result<LinearCoefficientMap> {
    participation.check_against(config)?;
    if round == 0 || round > config.rounds() {
        return Err(Error::RoundOutOfRange {
            round,
            rounds: config.rounds(),
        });
    }
    let sizes = config.batch_size_per_user();
    let mut global: BTreeMap<SampleRef, BigRational> = BTreeMap::new();
    for t in 1..=round {
        let active = participation.active_set(t)?;
        let n_t: usize = active.iter().map(|&k| sizes[k]).sum();
        let carry = ratio(t - 1, t);
        let mut next: BTreeMap<SampleRef, BigRational> = BTreeMap::new();
        for &k in active {
            let fusion = ratio(sizes[k], n_t);
            let local = ratio(1, t * sizes[k]);
            for j in 0..sizes[k] {
                next.insert(SampleRef::new(k, t, j), &fusion * &local);
            }
            if !carry.is_zero() {
                let scale = &fusion * &carry;
                for (r, c) in &global {
                    *next.entry(*r).or_insert_with(BigRational::zero) += &scale * c;
                }
            }
        }
        global = next;
    }
    Ok(LinearCoefficientMap {
        coefficients: global,
        constant: vec![0.0; config.dim()],
    })
}

/// Coefficients of the paradigm's final output. Federated runs need the
/// participation log; one-shot paradigms ignore it.
pub fn extract_coefficients(
    config: &ParadigmConfig,
    participation: Option<&ParticipationLog>,
) -> Result<LinearCoefficientMap> {
    match config {
        ParadigmConfig::Centralized(c) => Ok(one_shot_map(&[c.samples], c.prior.dim())),
        ParadigmConfig::Distributed(c) => Ok(one_shot_map(c.samples_per_user(), c.dim())),
        ParadigmConfig::Federated(c) => {
            let log = participation.ok_or_else(|| {
                Error::Participation("federated coefficients need a participation log".into())
            })?;
            federated_coefficients(c, log, c.rounds())
        }
    }
}

fn variance_of(variances: &[f64], user: usize) -> Result<f64> {
    variances
        .get(user)
        .copied()
        .ok_or_else(|| Error::LengthMismatch(format!("no variance given for user {user}")))
}

/// `I(target; W_hat)` for isotropic Gaussian data with per-user variances.
///
/// Per coordinate, `Var(W_hat) = sum c^2 sigma^2` and conditioning on the
/// target removes its term, so `I = (d/2) ln(Var / Var_without_target)`.
pub fn gaussian_mi(
    coeffs: &LinearCoefficientMap,
    variances: &[f64],
    target: SampleRef,
    d: usize,
) -> Result<ExtendedReal> {
    let mut rest = 0.0;
    let mut own = 0.0;
    for (r, c) in coeffs.iter() {
        let term = c * c * variance_of(variances, r.user)?;
        if *r == target {
            own = term;
        } else {
            rest += term;
        }
    }
    if own + rest == 0.0 {
        return Err(Error::Degenerate("output has zero variance".into()));
    }
    if own == 0.0 {
        return Ok(ExtendedReal::Finite(0.0));
    }
    if rest == 0.0 {
        return Ok(ExtendedReal::Infinite);
    }
    Ok(ExtendedReal::Finite(0.5 * d as f64 * (own / rest).ln_1p()))
}

/// `I(target; W_hat | other samples of the target's user)`.
///
/// The conditioning samples are known constants, so only the target and the
/// other users contribute variance. Leakage is infinite when no other user
/// contributes. Federated runs are supported only under full participation,
/// where the output law is a single Gaussian; random participation is
/// handled by [`privacy_leakage_federated_mc`](super::privacy_leakage_federated_mc).
pub fn privacy_leakage_conditional(
    config: &ParadigmConfig,
    target: SampleRef,
) -> Result<ExtendedReal> {
    let priors = config.priors();
    let user_prior = priors
        .get(target.user)
        .ok_or_else(|| Error::InvalidParameter(format!("user {} out of range", target.user)))?;
    let coeffs = match config {
        ParadigmConfig::Federated(c) => {
            if c.active_per_round() != c.user_count() {
                return Err(Error::InvalidParameter(
                    "random participation has no closed-form leakage; use the Monte Carlo estimator"
                        .into(),
                ));
            }
            if target.round == 0 || target.round > c.rounds() {
                return Err(Error::RoundOutOfRange {
                    round: target.round,
                    rounds: c.rounds(),
                });
            }
            federated_coefficients(c, &c.full_participation(), c.rounds())?
        }
        _ => {
            if target.round != 0 {
                return Err(Error::InvalidParameter(
                    "one-shot paradigms address samples with round 0".into(),
                ));
            }
            extract_coefficients(config, None)?
        }
    };
    let size = match config {
        ParadigmConfig::Centralized(c) => c.samples,
        ParadigmConfig::Distributed(c) => c.samples_per_user()[target.user],
        ParadigmConfig::Federated(c) => c.batch_size_per_user()[target.user],
    };
    if target.index >= size {
        return Err(Error::InvalidParameter(format!(
            "sample index {} out of range for user {} with {size} samples",
            target.index, target.user
        )));
    }
    let variances: Vec<f64> = priors.iter().map(|p| p.variance()).collect();
    let c = coeffs.coefficient(&target);
    let own = c * c * user_prior.variance();
    let mut others = 0.0;
    for (r, c) in coeffs.iter() {
        if r.user != target.user {
            others += c * c * variances[r.user];
        }
    }
    if own == 0.0 {
        return Ok(ExtendedReal::Finite(0.0));
    }
    if others == 0.0 {
        return Ok(ExtendedReal::Infinite);
    }
    Ok(ExtendedReal::Finite(
        0.5 * config.dim() as f64 * (own / others).ln_1p(),
    ))
}

/// Exact sum of coefficients equals one for every mean-preserving aggregator.
pub fn sums_to_one(map: &LinearCoefficientMap) -> bool {
    map.total().is_one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{lemma2_closed_forms, lemma3_closed_forms, lemma4_closed_forms};
    use crate::domain::GaussianPrior;
    use crate::paradigms::{run_distributed, run_federated, CentralizedConfig, DistributedConfig};
    use crate::rng::SeededRng;

    #[test]
    fn centralized_coefficients() {
        let cfg = ParadigmConfig::Centralized(
            CentralizedConfig::new(GaussianPrior::centered(1, 1.0).unwrap(), 4).unwrap(),
        );
        let map = extract_coefficients(&cfg, None).unwrap();
        assert_eq!(map.len(), 4);
        for (_, c) in map.iter() {
            assert_eq!(c, 0.25);
        }
        assert!(sums_to_one(&map));
    }

    #[test]
    fn distributed_coefficients_are_pooled_mean() {
        let cfg = DistributedConfig::new(
            vec![GaussianPrior::centered(2, 1.0).unwrap(); 3],
            vec![2, 5, 3],
        )
        .unwrap();
        let map = extract_coefficients(&ParadigmConfig::Distributed(cfg), None).unwrap();
        for (r, _) in map.iter() {
            assert_eq!(map.exact(r).unwrap(), &ratio(1, 10));
        }
        assert!(sums_to_one(&map));
    }

    #[test]
    fn federated_full_participation_coefficients() {
        // Oracle: plain average of every sample seen, 1 / (T n K).
        let cfg = FederatedConfig::symmetric(4, 3, 3, 4, 1, 1.0).unwrap();
        let map = federated_coefficients(&cfg, &cfg.full_participation(), 3).unwrap();
        assert_eq!(map.len(), 3 * 3 * 4);
        for (r, _) in map.iter() {
            assert_eq!(map.exact(r).unwrap(), &ratio(1, 36));
        }
    }

    #[test]
    fn federated_partial_participation_weights() {
        let cfg = FederatedConfig::new(
            vec![GaussianPrior::centered(1, 1.0).unwrap(); 4],
            vec![1, 2, 3, 4],
            3,
            2,
        )
        .unwrap();
        let log = ParticipationLog::new(4, 2, vec![vec![0, 3], vec![1, 2], vec![2, 3]]).unwrap();
        let map = federated_coefficients(&cfg, &log, 3).unwrap();
        assert!(sums_to_one(&map));
        let n_tau = [5usize, 5, 7];
        for (r, _) in map.iter() {
            let expected = ratio(1, 3 * n_tau[r.round - 1]);
            assert_eq!(map.exact(r).unwrap(), &expected);
            assert_eq!(
                federated_sample_weight(r.round, 3, n_tau[r.round - 1]),
                expected
            );
        }
        assert_eq!(map.coefficient(&SampleRef::new(0, 2, 0)), 0.0);
    }

    #[test]
    fn federated_requires_consistent_log() {
        let cfg = FederatedConfig::symmetric(3, 2, 2, 2, 1, 1.0).unwrap();
        let short = ParticipationLog::new(3, 2, vec![vec![0, 1]]).unwrap();
        assert!(federated_coefficients(&cfg, &short, 1).is_err());
        assert!(extract_coefficients(&ParadigmConfig::Federated(cfg), None).is_err());
    }

    #[test]
    fn reconstruction_matches_simulation() {
        let cfg = DistributedConfig::new(
            vec![
                GaussianPrior::new(vec![1.0, 0.0], 0.5).unwrap(),
                GaussianPrior::new(vec![0.0, 2.0], 2.0).unwrap(),
            ],
            vec![3, 4],
        )
        .unwrap();
        let (w, data) = run_distributed(&cfg, &mut SeededRng::new(1, "recon")).unwrap();
        let map = extract_coefficients(&ParadigmConfig::Distributed(cfg), None).unwrap();
        assert!(map.reconstruct(&data).unwrap().max_abs_diff(&w) < 1e-12);

        let fcfg = FederatedConfig::symmetric(5, 2, 4, 3, 2, 1.0).unwrap();
        let traj = run_federated(&fcfg, &mut SeededRng::new(2, "recon")).unwrap();
        let map = federated_coefficients(&fcfg, &traj.participation, 4).unwrap();
        let batches: Vec<Dataset> = traj.all_batches().cloned().collect();
        assert!(
            map.reconstruct(&batches)
                .unwrap()
                .max_abs_diff(traj.final_model())
                < 1e-12
        );
    }

    #[test]
    fn gaussian_mi_matches_lemma2() {
        let cfg = ParadigmConfig::Centralized(
            CentralizedConfig::new(GaussianPrior::centered(5, 1.0).unwrap(), 10).unwrap(),
        );
        let map = extract_coefficients(&cfg, None).unwrap();
        let mi = gaussian_mi(&map, &[1.0], SampleRef::new(0, 0, 3), 5).unwrap();
        let lemma = lemma2_closed_forms(10, 5, 1.0).unwrap().mi_per_sample;
        assert!((mi.finite().unwrap() - lemma).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mi_matches_lemma3() {
        let cfg = DistributedConfig::symmetric(10, 4, 1, 1.0).unwrap();
        let map = extract_coefficients(&ParadigmConfig::Distributed(cfg), None).unwrap();
        let mi = gaussian_mi(&map, &[1.0; 10], SampleRef::new(7, 0, 2), 1).unwrap();
        let expected = 0.5 * (40.0f64 / 39.0).ln();
        assert!((mi.finite().unwrap() - expected).abs() < 1e-12);
        let lemma = lemma3_closed_forms(&[4; 10], &[1.0; 10], 1).unwrap()[7].mi_per_sample;
        assert!((mi.finite().unwrap() - lemma).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mi_matches_lemma4() {
        let cfg = FederatedConfig::symmetric(10, 4, 3, 10, 1, 1.0).unwrap();
        for t in 1..=3 {
            let map = federated_coefficients(&cfg, &cfg.full_participation(), t).unwrap();
            let mi = gaussian_mi(&map, &[1.0; 10], SampleRef::new(2, t, 1), 1).unwrap();
            let lemma = lemma4_closed_forms(t, 4, 10, 10, 1.0, 1)
                .unwrap()
                .mi_per_sample;
            assert!((mi.finite().unwrap() - lemma).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_mi_edge_cases() {
        let cfg = ParadigmConfig::Centralized(
            CentralizedConfig::new(GaussianPrior::centered(1, 1.0).unwrap(), 1).unwrap(),
        );
        let map = extract_coefficients(&cfg, None).unwrap();
        assert_eq!(
            gaussian_mi(&map, &[1.0], SampleRef::new(0, 0, 0), 1).unwrap(),
            ExtendedReal::Infinite
        );
        assert_eq!(
            gaussian_mi(&map, &[1.0], SampleRef::new(0, 0, 5), 1).unwrap(),
            ExtendedReal::Finite(0.0)
        );
    }

    #[test]
    fn conditional_leakage_cases() {
        let central = ParadigmConfig::Centralized(
            CentralizedConfig::new(GaussianPrior::centered(1, 1.0).unwrap(), 10).unwrap(),
        );
        assert_eq!(
            privacy_leakage_conditional(&central, SampleRef::new(0, 0, 0)).unwrap(),
            ExtendedReal::Infinite
        );
        let dist =
            ParadigmConfig::Distributed(DistributedConfig::symmetric(10, 4, 1, 1.0).unwrap());
        let p = privacy_leakage_conditional(&dist, SampleRef::new(0, 0, 0)).unwrap();
        assert!((p.finite().unwrap() - 0.013_699_487_094_057_2).abs() < 1e-12);
        assert!(privacy_leakage_conditional(&dist, SampleRef::new(0, 0, 4)).is_err());
        assert!(privacy_leakage_conditional(&dist, SampleRef::new(10, 0, 0)).is_err());
    }

    #[test]
    fn conditional_leakage_asymmetric() {
        let sizes = [2usize, 3, 5];
        let vars = [0.5, 1.0, 2.0];
        let priors = vars
            .iter()
            .map(|v| GaussianPrior::centered(2, *v).unwrap())
            .collect();
        let cfg =
            ParadigmConfig::Distributed(DistributedConfig::new(priors, sizes.to_vec()).unwrap());
        let lemma = lemma3_closed_forms(&sizes, &vars, 2).unwrap();
        for (k, report) in lemma.iter().enumerate() {
            let p = privacy_leakage_conditional(&cfg, SampleRef::new(k, 0, 1)).unwrap();
            let expected = report.privacy.unwrap().finite().unwrap();
            assert!((p.finite().unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_leakage_federated_full_participation() {
        let cfg = FederatedConfig::symmetric(10, 4, 1, 10, 1, 1.0).unwrap();
        let p =
            privacy_leakage_conditional(&ParadigmConfig::Federated(cfg), SampleRef::new(3, 1, 0))
                .unwrap();
        assert!((p.finite().unwrap() - 0.013_699_487_094_057_2).abs() < 1e-12);
        let partial = FederatedConfig::symmetric(10, 4, 1, 5, 1, 1.0).unwrap();
        assert!(privacy_leakage_conditional(
            &ParadigmConfig::Federated(partial),
            SampleRef::new(3, 1, 0)
        )
        .is_err());
    }
}
