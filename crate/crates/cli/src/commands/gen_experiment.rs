//! Per-round Monte Carlo generalization error of federated aggregation,
//! compared with the closed form under both candidate denominators: all
//! users `K` and active users `K_a`.

use fedinfo::bounds::lemma4_closed_forms;
use fedinfo::estimators::{estimate_gen_mc_per_round, MIN_GEN_TRIALS};
use fedinfo::paradigms::FederatedConfig;
use fedinfo::SeededRng;

use super::{with_retry, Outcome, RunOptions, Stopwatch};
use crate::config::{LoadedConfig, Paradigm, Setup};
use crate::error::CliError;
use crate::output::{Cell, Table};

pub const COLUMNS: [&str; 13] = [
    "t",
    "k",
    "k_a",
    "n",
    "estimate",
    "stderr",
    "gen_total_users",
    "gen_active_users",
    "within_total",
    "within_active",
    "matches",
    "attempts",
    "wall_time",
];

pub const DEFAULT_TRIALS: usize = 100_000;

fn verdict(total: bool, active: bool) -> &'static str {
    match (total, active) {
        (true, true) => "both",
        (true, false) => "total",
        (false, true) => "active",
        (false, false) => "neither",
    }
}

pub fn run(cfg: &LoadedConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let seed = cfg.seed(opts.seed)?;
    if let Some(p) = cfg.config.paradigm.filter(|p| *p != Paradigm::Federated) {
        return Err(cfg.invalid(
            "paradigm",
            format!("gen-experiment runs the federated protocol, not {p}"),
        ));
    }
    let setup = cfg.setup(&Setup::symmetric(10, 4, 1, 1.0, 5))?;
    let trials = cfg.trials(opts.trials, DEFAULT_TRIALS, MIN_GEN_TRIALS)?;
    let (n, variance) = setup.uniform().ok_or_else(|| {
        cfg.invalid(
            "samples",
            "federated closed forms assume equal batch sizes and variances",
        )
    })?;
    let (users, active, rounds) = (setup.users, setup.active, setup.rounds);
    let cfs = (1..=rounds)
        .map(|t| lemma4_closed_forms(t, n, users, active, variance, setup.dim))
        .collect::<fedinfo::Result<Vec<_>>>()
        .map_err(|e| cfg.invalid("samples", e))?;
    let config = FederatedConfig::new(setup.priors()?, setup.samples.clone(), rounds, active)?;

    let tol = setup.tolerance_sigma;
    let consistent = |e: &fedinfo::estimators::MCEstimate, t: usize| {
        let cf = &cfs[t];
        e.within_sigma(cf.gen, tol) || e.within_sigma(cf.gen_active_users.unwrap_or(cf.gen), tol)
    };
    let clock = Stopwatch::start(opts.timings);
    let (ests, attempts) = with_retry(
        &SeededRng::new(seed, "gen-experiment"),
        |r| estimate_gen_mc_per_round(&config, trials, r),
        |es| es.iter().enumerate().all(|(t, e)| consistent(e, t)),
    )?;
    let wall = clock.cell();

    let mut table = Table::new("gen-experiment", &COLUMNS);
    let mut failures = Vec::new();
    for (t, (est, cf)) in (1..=rounds).zip(ests.iter().zip(&cfs)) {
        let gen_active = cf.gen_active_users.unwrap_or(cf.gen);
        let within_total = est.within_sigma(cf.gen, tol);
        let within_active = est.within_sigma(gen_active, tol);
        let matches = verdict(within_total, within_active);
        if matches == "neither" {
            failures.push(format!(
                "round {t}: estimate {} matches neither closed form",
                est.mean
            ));
        }
        table.push(vec![
            Cell::from(t),
            Cell::from(users),
            Cell::from(active),
            Cell::from(n),
            Cell::from(est.mean),
            Cell::from(est.stderr),
            Cell::from(cf.gen),
            Cell::from(gen_active),
            Cell::from(within_total),
            Cell::from(within_active),
            Cell::text(matches),
            Cell::from(attempts),
            wall.clone(),
        ]);
    }
    Ok(Outcome { table, failures })
}
