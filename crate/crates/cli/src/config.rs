//! Experiment configuration files.
//!
//! A config is a JSON object with a `schema_version` field. Unknown keys are
//! rejected. Errors point at the offending line and column of the file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Centralized,
    Distributed,
    Federated,
}

/// A scalar shared by every user, or one value per user.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PerUser<T> {
    Same(T),
    Each(Vec<T>),
}

impl<T: Clone> PerUser<T> {
    fn expand(&self, users: usize) -> Option<Vec<T>> {
        match self {
            PerUser::Same(v) => Some(vec![v.clone(); users]),
            PerUser::Each(v) if v.len() == users => Some(v.clone()),
            PerUser::Each(_) => None,
        }
    }

    fn declared_len(&self) -> Option<usize> {
        match self {
            PerUser::Same(_) => None,
            PerUser::Each(v) => Some(v.len()),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1Options {
    pub active_min: Option<usize>,
    pub active_max: Option<usize>,
    pub pattern_trials: Option<usize>,
    pub entropy_trials: Option<usize>,
    /// Round of the target sample (1-based).
    pub target_round: Option<usize>,
    pub max_stderr: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedGrid {
    pub rounds: Vec<usize>,
    pub active: Vec<usize>,
    pub patterns: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    pub users: Option<Vec<usize>>,
    pub samples: Option<Vec<usize>>,
    pub dims: Option<Vec<usize>>,
    pub variances: Option<Vec<f64>>,
    #[serde(default)]
    pub force_zero_mi: bool,
    pub federated: Option<FederatedGrid>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub paradigm: Option<Paradigm>,
    pub users: Option<usize>,
    pub rounds: Option<usize>,
    pub samples: Option<PerUser<usize>>,
    pub active: Option<usize>,
    pub dim: Option<usize>,
    pub variance: Option<PerUser<f64>>,
    pub mean: Option<PerUser<f64>>,
    pub trials: Option<usize>,
    pub tolerance_sigma: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub figure1: Option<Figure1Options>,
    pub sweep: Option<SweepOptions>,
}

/// Source text kept around to anchor semantic errors to a line.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
}

/// 1-based position of the first occurrence of `"key"` used as an object key.
fn locate_key(text: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    for (i, line) in text.lines().enumerate() {
        let mut from = 0;
        while let Some(pos) = line[from..].find(&needle) {
            let at = from + pos;
            let rest = line[at + needle.len()..].trim_start();
            if rest.starts_with(':') {
                return Some((i + 1, at + 1));
            }
            from = at + needle.len();
        }
    }
    None
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Centralized => "centralized",
            Paradigm::Distributed => "distributed",
            Paradigm::Federated => "federated",
        })
    }
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: cannot read config: {e}", path.display())))?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Input(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        let loaded = Self {
            path: path.to_path_buf(),
            text,
            config,
        };
        if loaded.config.schema_version != SCHEMA_VERSION {
            return Err(loaded.invalid(
                "schema_version",
                format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    loaded.config.schema_version
                ),
            ));
        }
        Ok(loaded)
    }

    /// An input error anchored at `key`, or at the file when the key is absent.
    pub fn invalid(&self, key: &str, message: impl fmt::Display) -> CliError {
        match locate_key(&self.text, key) {
            Some((line, col)) => CliError::Input(format!(
                "{}:{line}:{col}: {key}: {message}",
                self.path.display()
            )),
            None => CliError::Input(format!("{}: {key}: {message}", self.path.display())),
        }
    }

    pub fn seed(&self, cli_seed: Option<u64>) -> Result<u64, CliError> {
        cli_seed
            .or(self.config.seed)
            .ok_or_else(|| self.invalid("seed", "a seed is required (set \"seed\" or pass --seed)"))
    }

    fn positive(&self, key: &str, value: Option<usize>, default: usize) -> Result<usize, CliError> {
        let v = value.unwrap_or(default);
        if v == 0 {
            return Err(self.invalid(key, "must be at least 1"));
        }
        Ok(v)
    }

    /// Resolves the population and protocol fields against defaults.
    pub fn setup(&self, defaults: &Setup) -> Result<Setup, CliError> {
        let c = &self.config;
        let declared = c
            .samples
            .as_ref()
            .and_then(PerUser::declared_len)
            .or_else(|| c.variance.as_ref().and_then(PerUser::declared_len));
        let users = self.positive("users", c.users.or(declared), defaults.users)?;
        let samples = match &c.samples {
            Some(s) => s
                .expand(users)
                .ok_or_else(|| self.invalid("samples", format!("expected {users} entries")))?,
            None => vec![defaults.samples[0]; users],
        };
        if samples.contains(&0) {
            return Err(self.invalid("samples", "every user needs at least one sample"));
        }
        let variances = match &c.variance {
            Some(v) => v
                .expand(users)
                .ok_or_else(|| self.invalid("variance", format!("expected {users} entries")))?,
            None => vec![defaults.variances[0]; users],
        };
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(self.invalid("variance", format!("must be positive and finite (got {v})")));
        }
        let dim = self.positive("dim", c.dim, defaults.dim)?;
        let mean = match &c.mean {
            None => vec![0.0; dim],
            Some(PerUser::Same(m)) => vec![*m; dim],
            Some(PerUser::Each(m)) if m.len() == dim => m.clone(),
            Some(PerUser::Each(m)) => {
                return Err(self.invalid("mean", format!("expected {dim} entries, got {}", m.len())))
            }
        };
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(self.invalid("mean", "entries must be finite"));
        }
        let rounds = self.positive("rounds", c.rounds, defaults.rounds)?;
        let active = self.positive("active", c.active, users.min(defaults.active))?;
        if active > users {
            return Err(self.invalid("active", format!("must not exceed users = {users}")));
        }
        let tolerance_sigma = c.tolerance_sigma.unwrap_or(defaults.tolerance_sigma);
        if !(tolerance_sigma > 0.0) {
            return Err(self.invalid("tolerance_sigma", "must be positive"));
        }
        Ok(Setup {
            users,
            samples,
            variances,
            dim,
            mean,
            rounds,
            active,
            tolerance_sigma,
        })
    }

    pub fn trials(
        &self,
        cli_trials: Option<usize>,
        default: usize,
        minimum: usize,
    ) -> Result<usize, CliError> {
        let trials = cli_trials.or(self.config.trials).unwrap_or(default);
        if trials < minimum {
            return Err(self.invalid(
                "trials",
                format!("at least {minimum} trials are required (got {trials})"),
            ));
        }
        Ok(trials)
    }
}

/// Population and protocol parameters after defaults are applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub users: usize,
    pub samples: Vec<usize>,
    pub variances: Vec<f64>,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub rounds: usize,
    pub active: usize,
    pub tolerance_sigma: f64,
}

impl Setup {
    pub fn symmetric(
        users: usize,
        samples: usize,
        dim: usize,
        variance: f64,
        rounds: usize,
    ) -> Self {
        Self {
            users,
            samples: vec![samples; users],
            variances: vec![variance; users],
            dim,
            mean: vec![0.0; dim],
            rounds,
            active: users,
            tolerance_sigma: 3.0,
        }
    }

    pub fn priors(&self) -> fedinfo::Result<Vec<fedinfo::GaussianPrior>> {
        self.variances
            .iter()
            .map(|v| fedinfo::GaussianPrior::new(self.mean.clone(), *v))
            .collect()
    }

    /// The shared batch size and variance, if all users agree.
    pub fn uniform(&self) -> Option<(usize, f64)> {
        let n = self.samples[0];
        let v = self.variances[0];
        (self.samples.iter().all(|s| *s == n) && self.variances.iter().all(|x| *x == v))
            .then_some((n, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedConfig, CliError> {
        LoadedConfig::parse(Path::new("cfg.json"), text.to_string())
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = load("{\n  \"schema_version\": 1,\n  \"seed\": ,\n}").unwrap_err();
        assert!(err.to_string().starts_with("cfg.json:3:"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_field_rejected() {
        let err = load("{\"schema_version\": 1, \"sed\": 3}").unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn semantic_errors_point_at_key() {
        let cfg =
            load("{\n\"schema_version\": 1,\n\"users\": 3,\n  \"samples\": [1, 2]\n}").unwrap();
        let err = cfg.setup(&Setup::symmetric(3, 4, 1, 1.0, 1)).unwrap_err();
        assert_eq!(err.to_string(), "cfg.json:4:3: samples: expected 3 entries");
        let err = load("{\"schema_version\": 2}").unwrap_err();
        assert!(
            err.to_string().starts_with("cfg.json:1:2: schema_version"),
            "{err}"
        );
    }

    #[test]
    fn per_user_lengths_set_user_count() {
        let cfg = load(r#"{"schema_version": 1, "samples": [2, 3, 5], "variance": [0.5, 1, 2]}"#)
            .unwrap();
        let s = cfg.setup(&Setup::symmetric(10, 4, 1, 1.0, 1)).unwrap();
        assert_eq!(s.users, 3);
        assert_eq!(s.samples, vec![2, 3, 5]);
        assert_eq!(s.active, 3);
        assert_eq!(s.uniform(), None);
    }

    #[test]
    fn seed_required() {
        let cfg = load(r#"{"schema_version": 1}"#).unwrap();
        assert!(cfg.seed(None).is_err());
        assert_eq!(cfg.seed(Some(4)).unwrap(), 4);
    }

    #[test]
    fn locate_ignores_values() {
        let text = "{\"a\": \"samples\",\n \"samples\": 3}";
        assert_eq!(locate_key(text, "samples"), Some((2, 2)));
    }
}
