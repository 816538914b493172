//! Closed forms against the exact coefficient method and Monte Carlo.
//!
//! Centralized configs (and distributed configs with one user) check the
//! single-learner lemma, multi-user distributed configs the distributed one,
//! federated configs the per-round federated one.

use fedinfo::bounds::{
    gen_bounds_centralized, gen_bounds_distributed, gen_bounds_federated, lemma2_closed_forms,
    lemma3_closed_forms, lemma4_closed_forms, ClosedFormReport, EnvelopePair,
};
use fedinfo::estimators::{
    estimate_gen_mc, estimate_gen_mc_per_round, extract_coefficients, federated_coefficients,
    gaussian_mi, privacy_leakage_conditional, MCEstimate, SampleRef, MIN_GEN_TRIALS,
};
use fedinfo::paradigms::{
    sample_participants, CentralizedConfig, DistributedConfig, FederatedConfig, ParadigmConfig,
    ParticipationLog,
};
use fedinfo::{ExtendedReal, SeededRng};

use super::{extended_match, status, with_retry, Outcome, RunOptions, Stopwatch};
use crate::config::{LoadedConfig, Paradigm, Setup};
use crate::error::CliError;
use crate::output::{Cell, Table};

pub const COLUMNS: [&str; 13] = [
    "experiment",
    "quantity",
    "user",
    "round",
    "analytic",
    "analytic_alt",
    "estimate",
    "stderr",
    "lower",
    "upper",
    "attempts",
    "wall_time",
    "status",
];

pub const DEFAULT_TRIALS: usize = 100_000;

#[derive(Default)]
struct Row {
    quantity: &'static str,
    user: Option<usize>,
    round: Option<usize>,
    analytic: Cell,
    analytic_alt: Cell,
    estimate: Cell,
    stderr: Cell,
    lower: Cell,
    upper: Cell,
    attempts: Option<usize>,
    wall_time: Cell,
    pass: bool,
}

struct Report {
    experiment: &'static str,
    table: Table,
    failures: Vec<String>,
}

impl Report {
    fn new(experiment: &'static str) -> Self {
        Self {
            experiment,
            table: Table::new("lemma-check", &COLUMNS),
            failures: Vec::new(),
        }
    }

    fn push(&mut self, row: Row) {
        if !row.pass {
            let mut what = format!("{} {}", self.experiment, row.quantity);
            if let Some(k) = row.user {
                what += &format!(" user {k}");
            }
            if let Some(t) = row.round {
                what += &format!(" round {t}");
            }
            self.failures.push(what);
        }
        let opt = |v: Option<usize>| v.map_or(Cell::Null, Cell::from);
        self.table.push(vec![
            Cell::text(self.experiment),
            Cell::text(row.quantity),
            opt(row.user),
            opt(row.round),
            row.analytic,
            row.analytic_alt,
            row.estimate,
            row.stderr,
            row.lower,
            row.upper,
            opt(row.attempts),
            row.wall_time,
            status(row.pass),
        ]);
    }
}

pub fn run(cfg: &LoadedConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let seed = cfg.seed(opts.seed)?;
    let paradigm = cfg.config.paradigm.ok_or_else(|| {
        cfg.invalid(
            "paradigm",
            "lemma-check needs one of centralized, distributed, federated",
        )
    })?;
    let setup = cfg.setup(&Setup::symmetric(1, 10, 1, 1.0, 1))?;
    let trials = cfg.trials(opts.trials, DEFAULT_TRIALS, MIN_GEN_TRIALS)?;
    let rng = SeededRng::new(seed, "lemma-check");
    let report = match paradigm {
        Paradigm::Centralized if setup.users != 1 => {
            return Err(cfg.invalid("users", "a centralized run has exactly one user"))
        }
        Paradigm::Centralized | Paradigm::Distributed if setup.users == 1 => {
            centralized(cfg, &setup, trials, &rng, opts.timings)?
        }
        Paradigm::Centralized | Paradigm::Distributed => {
            distributed(cfg, &setup, trials, &rng, opts.timings)?
        }
        Paradigm::Federated => federated(cfg, &setup, trials, &rng, opts.timings)?,
    };
    Ok(Outcome {
        table: report.table,
        failures: report.failures,
    })
}

fn gen_row(cf_gen: f64, alt: Option<f64>, est: &MCEstimate, tol: f64) -> Row {
    Row {
        quantity: "gen",
        analytic: Cell::from(cf_gen),
        analytic_alt: Cell::opt(alt),
        estimate: Cell::from(est.mean),
        stderr: Cell::from(est.stderr),
        pass: est.within_sigma(cf_gen, tol),
        ..Row::default()
    }
}

fn mi_row(user: usize, round: Option<usize>, analytic: f64, value: ExtendedReal) -> Row {
    Row {
        quantity: "mi",
        user: Some(user),
        round,
        analytic: Cell::from(analytic),
        estimate: Cell::from(value),
        pass: extended_match(value, ExtendedReal::Finite(analytic)),
        ..Row::default()
    }
}

fn centralized(
    cfg: &LoadedConfig,
    setup: &Setup,
    trials: usize,
    rng: &SeededRng,
    timings: bool,
) -> Result<Report, CliError> {
    let (n, variance, d) = (setup.samples[0], setup.variances[0], setup.dim);
    let cf = lemma2_closed_forms(n, d, variance).map_err(|e| cfg.invalid("samples", e))?;
    let prior = setup.priors()?.remove(0);
    let config = ParadigmConfig::Centralized(CentralizedConfig::new(prior, n)?);
    let mut report = Report::new("lemma2");

    let clock = Stopwatch::start(timings);
    let tol = setup.tolerance_sigma;
    let (est, attempts) = with_retry(
        &rng.derive("gen"),
        |r| estimate_gen_mc(&config, trials, r),
        |e| e.within_sigma(cf.gen, tol),
    )?;
    report.push(Row {
        attempts: Some(attempts),
        wall_time: clock.cell(),
        ..gen_row(cf.gen, None, &est, tol)
    });

    let target = SampleRef::new(0, 0, 0);
    let map = extract_coefficients(&config, None)?;
    report.push(mi_row(
        0,
        None,
        cf.mi_per_sample,
        gaussian_mi(&map, &setup.variances, target, d)?,
    ));

    let privacy = privacy_leakage_conditional(&config, target)?;
    let expected = cf.privacy.unwrap_or(ExtendedReal::Infinite);
    report.push(Row {
        quantity: "priv",
        user: Some(0),
        analytic: Cell::from(expected),
        estimate: Cell::from(privacy),
        pass: extended_match(privacy, expected),
        ..Row::default()
    });

    let bound = gen_bounds_centralized(&vec![cf.mi_per_sample; n], &cf.psi_plus, &cf.psi_minus)?
        .with_analytic_gen(cf.gen);
    report.push(bound_row(None, &bound));
    Ok(report)
}

fn bound_row(round: Option<usize>, bound: &fedinfo::bounds::BoundReport) -> Row {
    Row {
        quantity: "bound",
        round,
        analytic: Cell::opt(bound.analytic_gen),
        lower: Cell::from(bound.lower),
        upper: Cell::from(bound.upper),
        pass: bound.sandwiches().unwrap_or(true),
        ..Row::default()
    }
}

fn envelope_pairs(reports: &[ClosedFormReport]) -> Vec<EnvelopePair> {
    reports
        .iter()
        .map(|r| EnvelopePair::new(r.psi_plus.clone(), r.psi_minus.clone()))
        .collect()
}

fn distributed(
    cfg: &LoadedConfig,
    setup: &Setup,
    trials: usize,
    rng: &SeededRng,
    timings: bool,
) -> Result<Report, CliError> {
    let d = setup.dim;
    let cfs = lemma3_closed_forms(&setup.samples, &setup.variances, d)
        .map_err(|e| cfg.invalid("variance", e))?;
    let gen = cfs[0].gen;
    let config = ParadigmConfig::Distributed(DistributedConfig::new(
        setup.priors()?,
        setup.samples.clone(),
    )?);
    let mut report = Report::new("lemma3");

    let clock = Stopwatch::start(timings);
    let tol = setup.tolerance_sigma;
    let (est, attempts) = with_retry(
        &rng.derive("gen"),
        |r| estimate_gen_mc(&config, trials, r),
        |e| e.within_sigma(gen, tol),
    )?;
    report.push(Row {
        attempts: Some(attempts),
        wall_time: clock.cell(),
        ..gen_row(gen, None, &est, tol)
    });

    let map = extract_coefficients(&config, None)?;
    for (k, cf) in cfs.iter().enumerate() {
        let target = SampleRef::new(k, 0, 0);
        let mi = gaussian_mi(&map, &setup.variances, target, d)?;
        report.push(mi_row(k, None, cf.mi_per_sample, mi));
    }
    for (k, cf) in cfs.iter().enumerate() {
        let privacy = privacy_leakage_conditional(&config, SampleRef::new(k, 0, 0))?;
        let expected = cf.privacy.unwrap_or(ExtendedReal::Infinite);
        report.push(Row {
            quantity: "priv",
            user: Some(k),
            analytic: Cell::from(expected),
            estimate: Cell::from(privacy),
            pass: extended_match(privacy, expected),
            ..Row::default()
        });
    }

    let mi: Vec<Vec<f64>> = cfs
        .iter()
        .zip(&setup.samples)
        .map(|(cf, &n)| vec![cf.mi_per_sample; n])
        .collect();
    let bound =
        gen_bounds_distributed(&mi, &setup.samples, &envelope_pairs(&cfs))?.with_analytic_gen(gen);
    report.push(bound_row(None, &bound));
    Ok(report)
}

/// A participation history: everyone when `K_a = K`, otherwise drawn from
/// the uniform law.
pub(crate) fn participation(
    config: &FederatedConfig,
    rng: &mut SeededRng,
) -> fedinfo::Result<ParticipationLog> {
    if config.active_per_round() == config.user_count() {
        return Ok(config.full_participation());
    }
    let sets = (0..config.rounds())
        .map(|_| sample_participants(config.user_count(), config.active_per_round(), rng))
        .collect::<fedinfo::Result<Vec<_>>>()?;
    ParticipationLog::new(config.user_count(), config.active_per_round(), sets)
}

fn federated(
    cfg: &LoadedConfig,
    setup: &Setup,
    trials: usize,
    rng: &SeededRng,
    timings: bool,
) -> Result<Report, CliError> {
    let (n, variance) = setup.uniform().ok_or_else(|| {
        cfg.invalid(
            "samples",
            "federated closed forms assume equal batch sizes and variances",
        )
    })?;
    let (users, active, rounds, d) = (setup.users, setup.active, setup.rounds, setup.dim);
    let cfs = (1..=rounds)
        .map(|t| lemma4_closed_forms(t, n, users, active, variance, d))
        .collect::<fedinfo::Result<Vec<_>>>()
        .map_err(|e| cfg.invalid("samples", e))?;
    let config = FederatedConfig::new(setup.priors()?, setup.samples.clone(), rounds, active)?;
    let mut report = Report::new("lemma4");

    let clock = Stopwatch::start(timings);
    let tol = setup.tolerance_sigma;
    let (ests, attempts) = with_retry(
        &rng.derive("gen"),
        |r| estimate_gen_mc_per_round(&config, trials, r),
        |es| {
            es.iter()
                .zip(&cfs)
                .all(|(e, cf)| e.within_sigma(cf.gen, tol))
        },
    )?;
    let wall = clock.cell();
    for (t, (est, cf)) in (1..=rounds).zip(ests.iter().zip(&cfs)) {
        report.push(Row {
            round: Some(t),
            attempts: Some(attempts),
            wall_time: wall.clone(),
            ..gen_row(cf.gen, cf.gen_active_users, est, tol)
        });
    }

    let log = participation(&config, &mut rng.derive("participation"))?;
    for (t, cf) in (1..=rounds).zip(&cfs) {
        let map = federated_coefficients(&config, &log, t)?;
        let active_set = log.active_set(t)?;
        let mut rows = Vec::with_capacity(active_set.len());
        for &k in active_set {
            let mi = gaussian_mi(&map, &setup.variances, SampleRef::new(k, t, 0), d)?;
            rows.push(vec![mi.finite().unwrap_or(f64::INFINITY); n]);
            if k == active_set[0] {
                report.push(mi_row(k, Some(t), cf.mi_per_sample, mi));
            }
        }
        let pair = EnvelopePair::new(cf.psi_plus.clone(), cf.psi_minus.clone());
        let bound = gen_bounds_federated(&rows, &log, t, &setup.samples, &vec![pair; users])?
            .with_analytic_gen(cf.gen);
        report.push(bound_row(Some(t), &bound));
    }
    Ok(report)
}
