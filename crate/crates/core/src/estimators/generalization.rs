//! Monte Carlo estimates of the expected generalization error.
//!
//! Each trial runs the protocol on fresh data and records population risk
//! (in closed form, averaged over users with weights `n_k / n`) minus the
//! empirical risk on the data the output was trained on. For federated runs
//! the gap at round `t` uses the active users' current batches and weights
//! `n_k / n(t)`.

use crate::domain::{
    empirical_risk, population_risk_gaussian, sample_dataset, Dataset, Hypothesis,
};
use crate::error::{Error, Result};
use crate::paradigms::{
    centralized_erm, run_distributed, run_federated, FederatedConfig, ParadigmConfig,
};
use crate::rng::SeededRng;

use super::mc::{run_trials, MCEstimate};

pub const MIN_GEN_TRIALS: usize = 100;

fn weighted_gap(
    datasets: &[Dataset],
    priors: &[crate::domain::GaussianPrior],
    w: &Hypothesis,
) -> Result<f64> {
    let total: usize = datasets.iter().map(Dataset::len).sum();
    let mut gap = 0.0;
    for data in datasets {
        let weight = data.len() as f64 / total as f64;
        let prior = &priors[data.owner()];
        gap += weight * (population_risk_gaussian(prior, w)? - empirical_risk(data, w)?);
    }
    Ok(gap)
}

/// Generalization gap of one federated trajectory at every round.
pub fn federated_gaps(config: &FederatedConfig, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let traj = run_federated(config, rng)?;
    traj.batches
        .iter()
        .zip(&traj.global_models)
        .map(|(batches, w)| weighted_gap(batches, config.priors(), w))
        .collect()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_GEN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "generalization estimates need at least {MIN_GEN_TRIALS} trials (got {trials})"
        )));
    }
    Ok(())
}

/// Expected generalization error of the paradigm's final output.
pub fn estimate_gen_mc(
    config: &ParadigmConfig,
    trials: usize,
    rng: &SeededRng,
) -> Result<MCEstimate> {
    check_trials(trials)?;
    let estimates = match config {
        ParadigmConfig::Centralized(c) => run_trials(trials, 1, rng, |r, out| {
            let data = sample_dataset(&c.prior, c.samples, r)?;
            let w = centralized_erm(&data)?;
            out[0] = population_risk_gaussian(&c.prior, &w)? - empirical_risk(&data, &w)?;
            Ok(())
        })?,
        ParadigmConfig::Distributed(c) => run_trials(trials, 1, rng, |r, out| {
            let (w, data) = run_distributed(c, r)?;
            out[0] = weighted_gap(&data, c.priors(), &w)?;
            Ok(())
        })?,
        ParadigmConfig::Federated(c) => {
            return Ok(*estimate_gen_mc_per_round(c, trials, rng)?
                .last()
                .expect("at least one round"))
        }
    };
    Ok(estimates[0])
}

/// Expected generalization error at each round `t = 1..=T`, all rounds
/// estimated from the same trajectories.
pub fn estimate_gen_mc_per_round(
    config: &FederatedConfig,
    trials: usize,
    rng: &SeededRng,
) -> Result<Vec<MCEstimate>> {
    check_trials(trials)?;
    run_trials(trials, config.rounds(), rng, |r, out| {
        let gaps = federated_gaps(config, r)?;
        out.copy_from_slice(&gaps);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{lemma2_closed_forms, lemma4_closed_forms};
    use crate::domain::GaussianPrior;
    use crate::paradigms::{CentralizedConfig, DistributedConfig};

    #[test]
    fn rejects_few_trials() {
        let cfg = ParadigmConfig::Distributed(DistributedConfig::symmetric(2, 2, 1, 1.0).unwrap());
        assert!(estimate_gen_mc(&cfg, 99, &SeededRng::new(1, "g")).is_err());
    }

    #[test]
    fn centralized_small_run_tracks_closed_form() {
        let cfg = ParadigmConfig::Centralized(
            CentralizedConfig::new(GaussianPrior::centered(2, 1.0).unwrap(), 5).unwrap(),
        );
        let est = estimate_gen_mc(&cfg, 20_000, &SeededRng::new(3, "gen-c")).unwrap();
        let gen = lemma2_closed_forms(5, 2, 1.0).unwrap().gen;
        assert!(est.within_sigma(gen, 4.0), "{est:?} vs {gen}");
    }

    #[test]
    fn federated_rounds_decay() {
        let cfg = FederatedConfig::symmetric(3, 2, 3, 3, 1, 1.0).unwrap();
        let est = estimate_gen_mc_per_round(&cfg, 20_000, &SeededRng::new(5, "gen-f")).unwrap();
        for (t, e) in est.iter().enumerate() {
            let gen = lemma4_closed_forms(t + 1, 2, 3, 3, 1.0, 1).unwrap().gen;
            assert!(e.within_sigma(gen, 4.0), "t={}: {e:?} vs {gen}", t + 1);
        }
        let last = estimate_gen_mc(
            &ParadigmConfig::Federated(cfg),
            20_000,
            &SeededRng::new(5, "gen-f"),
        )
        .unwrap();
        assert_eq!(last, est[2]);
    }

    #[test]
    fn deterministic() {
        let cfg = ParadigmConfig::Distributed(DistributedConfig::symmetric(3, 2, 2, 1.0).unwrap());
        let a = estimate_gen_mc(&cfg, 500, &SeededRng::new(8, "d")).unwrap();
        let b = estimate_gen_mc(&cfg, 500, &SeededRng::new(8, "d")).unwrap();
        assert_eq!(a, b);
    }
}
