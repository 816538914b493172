//! Per-user privacy leakage of federated aggregation as the number of
//! active users grows, against the distributed closed form.

use fedinfo::bounds::lemma3_closed_forms;
use fedinfo::estimators::{
    privacy_leakage_federated_mc, LeakageEstimate, LeakageMcOptions, SampleRef, MIN_LEAKAGE_TRIALS,
};
use fedinfo::paradigms::FederatedConfig;
use fedinfo::{Error, ExtendedReal, SeededRng};

use super::{Outcome, RunOptions, Stopwatch};
use crate::config::{LoadedConfig, Setup};
use crate::error::CliError;
use crate::output::{Cell, Table};

pub const COLUMNS: [&str; 6] = [
    "k_a",
    "federated_priv_estimate",
    "stderr",
    "distributed_priv_analytic",
    "status",
    "wall_time",
];

pub const DEFAULT_PATTERN_TRIALS: usize = 20_000;
pub const DEFAULT_ENTROPY_TRIALS: usize = 50;

pub fn defaults() -> Setup {
    Setup::symmetric(10, 4, 1, 1.0, 1)
}

pub fn run(cfg: &LoadedConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let seed = cfg.seed(opts.seed)?;
    let setup = cfg.setup(&defaults())?;
    let section = cfg.config.figure1.clone().unwrap_or_default();
    let users = setup.users;
    let lowest = section.active_min.unwrap_or(2.min(users));
    let highest = section.active_max.unwrap_or(users);
    if lowest == 0 || lowest > highest {
        return Err(cfg.invalid(
            "active_min",
            format!("need 1 <= active_min <= active_max (got {lowest}..{highest})"),
        ));
    }
    if highest > users {
        return Err(cfg.invalid("active_max", format!("must not exceed users = {users}")));
    }
    let pattern_trials = opts
        .trials
        .or(section.pattern_trials)
        .or(cfg.config.trials)
        .unwrap_or(DEFAULT_PATTERN_TRIALS);
    if pattern_trials < MIN_LEAKAGE_TRIALS {
        return Err(cfg.invalid(
            "pattern_trials",
            format!("at least {MIN_LEAKAGE_TRIALS} trials are required (got {pattern_trials})"),
        ));
    }
    let entropy_trials = section.entropy_trials.unwrap_or(DEFAULT_ENTROPY_TRIALS);
    if entropy_trials == 0 {
        return Err(cfg.invalid("entropy_trials", "must be at least 1"));
    }
    let target_round = section.target_round.unwrap_or(1);
    if target_round == 0 || target_round > setup.rounds {
        return Err(cfg.invalid("target_round", format!("must lie in 1..={}", setup.rounds)));
    }
    let options = LeakageMcOptions {
        pattern_trials,
        entropy_trials,
        max_stderr: section.max_stderr,
    };

    let distributed = lemma3_closed_forms(&setup.samples, &setup.variances, setup.dim)
        .map_err(|e| cfg.invalid("variance", e))?[0]
        .privacy
        .unwrap_or(ExtendedReal::Infinite);
    let priors = setup.priors()?;
    let root = SeededRng::new(seed, "figure1");
    let target = SampleRef::new(0, target_round, 0);

    let mut table = Table::new("figure1", &COLUMNS);
    let mut failures = Vec::new();
    for active in lowest..=highest {
        let clock = Stopwatch::start(opts.timings);
        let config =
            FederatedConfig::new(priors.clone(), setup.samples.clone(), setup.rounds, active)?;
        let rng = root.derive(&format!("k_a-{active}"));
        let (estimate, stderr, status) =
            match privacy_leakage_federated_mc(&config, target, &options, &rng) {
                Ok(LeakageEstimate::Infinite) => (Cell::Inf, Cell::Null, "ok".to_string()),
                Ok(LeakageEstimate::Finite(e)) => {
                    (Cell::from(e.mean), Cell::from(e.stderr), "ok".to_string())
                }
                Err(Error::NonConvergence(msg)) => {
                    log::warn!("k_a = {active}: {msg}");
                    failures.push(format!("k_a = {active}: {msg}"));
                    (Cell::Null, Cell::Null, format!("non-convergence: {msg}"))
                }
                Err(e) => return Err(e.into()),
            };
        table.push(vec![
            Cell::from(active),
            estimate,
            stderr,
            Cell::from(distributed),
            Cell::Text(status),
            clock.cell(),
        ]);
    }
    Ok(Outcome { table, failures })
}
