//! Information-theoretic bounds over a parameter grid, each row checked for
//! `lower <= gen <= upper`.
//!
//! One-shot rows use the single-learner closed forms for `K = 1` and the
//! equal-case distributed ones otherwise. Optional federated rows average the
//! per-pattern bound over sampled participation histories.

use fedinfo::bounds::{
    average_bound_reports, gen_bounds_centralized, gen_bounds_distributed, gen_bounds_federated,
    lemma2_closed_forms, lemma3_closed_forms, lemma4_closed_forms, BoundReport, EnvelopePair,
};
use fedinfo::paradigms::FederatedConfig;
use fedinfo::SeededRng;

use super::lemma_check::participation;
use super::{Outcome, RunOptions, Stopwatch};
use crate::config::{FederatedGrid, LoadedConfig};
use crate::error::CliError;
use crate::output::{Cell, Table};

pub const COLUMNS: [&str; 13] = [
    "paradigm",
    "k",
    "n",
    "d",
    "variance",
    "t",
    "k_a",
    "mi_per_sample",
    "analytic_gen",
    "lower",
    "upper",
    "wall_time",
    "status",
];

pub const DEFAULT_USERS: [usize; 4] = [1, 2, 5, 10];
pub const DEFAULT_SAMPLES: [usize; 3] = [2, 4, 16];
pub const DEFAULT_DIMS: [usize; 2] = [1, 5];
pub const DEFAULT_VARIANCES: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_PATTERNS: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Point {
    users: usize,
    n: usize,
    d: usize,
    variance: f64,
}

struct Sweep {
    table: Table,
    failures: Vec<String>,
    zero_mi: bool,
    timings: bool,
}

impl Sweep {
    fn push(
        &mut self,
        paradigm: &str,
        p: Point,
        schedule: Option<(usize, usize)>,
        result: Result<(f64, BoundReport), String>,
        clock: Stopwatch,
    ) {
        let (t, k_a) = match schedule {
            Some((t, a)) => (Cell::from(t), Cell::from(a)),
            None => (Cell::Null, Cell::Null),
        };
        let mut row = vec![
            Cell::text(paradigm),
            Cell::from(p.users),
            Cell::from(p.n),
            Cell::from(p.d),
            Cell::from(p.variance),
            t,
            k_a,
        ];
        match result {
            Ok((mi, report)) => {
                let status = match report.sandwiches() {
                    Some(false) => {
                        self.failures.push(format!(
                            "{paradigm} K={} n={} d={} variance={} {schedule:?}: {} <= {:?} <= {} violated",
                            p.users, p.n, p.d, p.variance, report.lower, report.analytic_gen, report.upper
                        ));
                        "violation"
                    }
                    _ => "ok",
                };
                row.extend([
                    Cell::from(mi),
                    Cell::opt(report.analytic_gen),
                    Cell::from(report.lower),
                    Cell::from(report.upper),
                    clock.cell(),
                    Cell::text(status),
                ]);
            }
            Err(reason) => {
                log::warn!(
                    "skipping {paradigm} K={} n={} d={}: {reason}",
                    p.users,
                    p.n,
                    p.d
                );
                row.extend([
                    Cell::Null,
                    Cell::Null,
                    Cell::Null,
                    Cell::Null,
                    Cell::Null,
                    Cell::Text(format!("skipped: {reason}")),
                ]);
            }
        }
        self.table.push(row);
    }

    /// Attaches the analytic value unless the MI input was overridden, in
    /// which case the bound no longer describes the algorithm.
    fn finish(&self, report: BoundReport, gen: f64) -> BoundReport {
        if self.zero_mi {
            report
        } else {
            report.with_analytic_gen(gen)
        }
    }

    fn mi(&self, value: f64) -> f64 {
        if self.zero_mi {
            0.0
        } else {
            value
        }
    }

    fn one_shot(&self, p: Point) -> fedinfo::Result<(f64, BoundReport)> {
        if p.users == 1 {
            let cf = lemma2_closed_forms(p.n, p.d, p.variance)?;
            let mi = self.mi(cf.mi_per_sample);
            let report = gen_bounds_centralized(&vec![mi; p.n], &cf.psi_plus, &cf.psi_minus)?;
            return Ok((mi, self.finish(report, cf.gen)));
        }
        let cfs = lemma3_closed_forms(&vec![p.n; p.users], &vec![p.variance; p.users], p.d)?;
        let mi = self.mi(cfs[0].mi_per_sample);
        let envelopes: Vec<EnvelopePair> = cfs
            .iter()
            .map(|cf| EnvelopePair::new(cf.psi_plus.clone(), cf.psi_minus.clone()))
            .collect();
        let report = gen_bounds_distributed(
            &vec![vec![mi; p.n]; p.users],
            &vec![p.n; p.users],
            &envelopes,
        )?;
        Ok((mi, self.finish(report, cfs[0].gen)))
    }

    /// Bound at the last round, averaged over sampled histories. The
    /// analytic value is the generalization error of the protocol as run,
    /// i.e. with `K_a` in the denominator.
    fn federated(
        &self,
        p: Point,
        rounds: usize,
        active: usize,
        patterns: usize,
        rng: &SeededRng,
    ) -> fedinfo::Result<(f64, BoundReport)> {
        let cf = lemma4_closed_forms(rounds, p.n, p.users, active, p.variance, p.d)?;
        let config = FederatedConfig::symmetric(p.users, p.n, rounds, active, p.d, p.variance)?;
        let mi = self.mi(cf.mi_per_sample);
        let pair = EnvelopePair::new(cf.psi_plus.clone(), cf.psi_minus.clone());
        let envelopes = vec![pair; p.users];
        let sizes = vec![p.n; p.users];
        let mut stream = rng.clone();
        let reports = (0..patterns)
            .map(|_| {
                let log = participation(&config, &mut stream)?;
                gen_bounds_federated(
                    &vec![vec![mi; p.n]; active],
                    &log,
                    rounds,
                    &sizes,
                    &envelopes,
                )
            })
            .collect::<fedinfo::Result<Vec<_>>>()?;
        let report = average_bound_reports(&reports)?;
        Ok((
            mi,
            self.finish(report, cf.gen_active_users.unwrap_or(cf.gen)),
        ))
    }
}

fn nonempty<T: Copy>(
    cfg: &LoadedConfig,
    key: &str,
    given: &Option<Vec<T>>,
    default: &[T],
) -> Result<Vec<T>, CliError> {
    match given {
        None => Ok(default.to_vec()),
        Some(v) if v.is_empty() => Err(cfg.invalid(key, "grid axis must not be empty")),
        Some(v) => Ok(v.clone()),
    }
}

pub fn run(cfg: &LoadedConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let seed = cfg.seed(opts.seed)?;
    let section = cfg.config.sweep.clone().unwrap_or_default();
    let users = nonempty(cfg, "users", &section.users, &DEFAULT_USERS)?;
    let samples = nonempty(cfg, "samples", &section.samples, &DEFAULT_SAMPLES)?;
    let dims = nonempty(cfg, "dims", &section.dims, &DEFAULT_DIMS)?;
    let variances = nonempty(cfg, "variances", &section.variances, &DEFAULT_VARIANCES)?;
    if users.contains(&0) {
        return Err(cfg.invalid("users", "user counts must be at least 1"));
    }
    if samples.contains(&0) {
        return Err(cfg.invalid("samples", "sample counts must be at least 1"));
    }
    if dims.contains(&0) {
        return Err(cfg.invalid("dims", "dimensions must be at least 1"));
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(cfg.invalid(
            "variances",
            format!("must be positive and finite (got {v})"),
        ));
    }
    let federated = section.federated.clone();
    if let Some(FederatedGrid {
        rounds,
        active,
        patterns,
    }) = &federated
    {
        if rounds.is_empty() || rounds.contains(&0) {
            return Err(cfg.invalid(
                "rounds",
                "federated rounds must be a non-empty list of positive integers",
            ));
        }
        if active.is_empty() || active.contains(&0) {
            return Err(cfg.invalid(
                "active",
                "federated active counts must be a non-empty list of positive integers",
            ));
        }
        if *patterns == Some(0) {
            return Err(cfg.invalid("patterns", "must be at least 1"));
        }
    }

    let mut sweep = Sweep {
        table: Table::new("bounds-sweep", &COLUMNS),
        failures: Vec::new(),
        zero_mi: section.force_zero_mi,
        timings: opts.timings,
    };
    let root = SeededRng::new(seed, "bounds-sweep");
    for &k in &users {
        for &n in &samples {
            for &d in &dims {
                for &variance in &variances {
                    let p = Point {
                        users: k,
                        n,
                        d,
                        variance,
                    };
                    let clock = Stopwatch::start(sweep.timings);
                    let paradigm = if k == 1 { "centralized" } else { "distributed" };
                    let result = sweep.one_shot(p).map_err(|e| e.to_string());
                    sweep.push(paradigm, p, None, result, clock);

                    let Some(grid) = &federated else { continue };
                    for &t in &grid.rounds {
                        for &a in grid.active.iter().filter(|a| **a <= k) {
                            let clock = Stopwatch::start(sweep.timings);
                            let rng = root.derive(&format!("K{k}-n{n}-d{d}-v{variance}-t{t}-a{a}"));
                            let patterns = grid.patterns.unwrap_or(DEFAULT_PATTERNS);
                            let result = sweep
                                .federated(p, t, a, patterns, &rng)
                                .map_err(|e| e.to_string());
                            sweep.push("federated", p, Some((t, a)), result, clock);
                        }
                    }
                }
            }
        }
    }
    Ok(Outcome {
        table: sweep.table,
        failures: sweep.failures,
    })
}
