//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, keys may appear once.
//! Every key has a default, so an empty file is a valid config.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use seqmix::SequenceFamily;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// What the runner executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Sequential preparation across a chain sequence.
    Protocol,
    /// One-step preparation cost against state count or spectral gap.
    Scaling,
    /// Regime classification sweep over random distributions.
    LemmaSuite,
    /// Walk spectrum checks over random reversible chains.
    SpectralSuite,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Protocol => "protocol",
            RunMode::Scaling => "scaling",
            RunMode::LemmaSuite => "lemma-suite",
            RunMode::SpectralSuite => "spectral-suite",
        }
    }
}

impl FromStr for RunMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "protocol" => Ok(RunMode::Protocol),
            "scaling" => Ok(RunMode::Scaling),
            "lemma-suite" => Ok(RunMode::LemmaSuite),
            "spectral-suite" => Ok(RunMode::SpectralSuite),
            other => Err(ConfigError(format!(
                "unknown mode {other:?}; expected protocol, scaling, lemma-suite, \
                 or spectral-suite"
            ))),
        }
    }
}

fn parse_family(s: &str) -> Result<SequenceFamily, ConfigError> {
    match s {
        "constant" => Ok(SequenceFamily::ConstantChain),
        "annealing" => Ok(SequenceFamily::MetropolisAnnealing),
        "perturbed" => Ok(SequenceFamily::PerturbedWeights),
        other => Err(ConfigError(format!(
            "unknown family {other:?}; expected constant, annealing, or perturbed"
        ))),
    }
}

pub fn family_name(family: SequenceFamily) -> &'static str {
    match family {
        SequenceFamily::ConstantChain => "constant",
        SequenceFamily::MetropolisAnnealing => "annealing",
        SequenceFamily::PerturbedWeights => "perturbed",
    }
}

/// Everything a batch run needs. `n_list` drives the scaling, lemma, and
/// spectral modes; `delta_list` switches the scaling mode to a gap sweep
/// at fixed `n` when it has at least two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    pub family: SequenceFamily,
    pub n: usize,
    pub n_list: Vec<usize>,
    pub steps: usize,
    pub trials: usize,
    pub c: u32,
    pub eta: f64,
    pub kappa: f64,
    pub seed: u64,
    pub temperature0: f64,
    pub cooling: f64,
    pub perturbation: f64,
    pub sparsity: f64,
    pub delta: f64,
    pub delta_list: Vec<f64>,
    pub extra_samples: usize,
    pub fallback: bool,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Protocol,
            family: SequenceFamily::MetropolisAnnealing,
            n: 8,
            n_list: vec![4, 8, 16, 32, 64],
            steps: 10,
            trials: 10,
            c: 3,
            eta: 0.9,
            kappa: 2.0,
            seed: 1,
            temperature0: 2.0,
            cooling: 0.85,
            perturbation: 0.1,
            sparsity: 0.3,
            delta: 0.25,
            delta_list: Vec::new(),
            extra_samples: 0,
            fallback: true,
            out: None,
        }
    }
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("bad value for {key}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(|part| parse_scalar(key, part.trim()))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {lineno}: expected key = value, got {line:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError(format!("line {lineno}: duplicate key {key:?}")));
            }
            cfg.set(key, value)
                .map_err(|e| ConfigError(format!("line {lineno}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "mode" => self.mode = value.parse()?,
            "family" => self.family = parse_family(value)?,
            "n" => self.n = parse_scalar(key, value)?,
            "n_list" => self.n_list = parse_list(key, value)?,
            "steps" => self.steps = parse_scalar(key, value)?,
            "trials" => self.trials = parse_scalar(key, value)?,
            "c" => self.c = parse_scalar(key, value)?,
            "eta" => self.eta = parse_scalar(key, value)?,
            "kappa" => self.kappa = parse_scalar(key, value)?,
            "seed" => self.seed = parse_scalar(key, value)?,
            "temperature0" => self.temperature0 = parse_scalar(key, value)?,
            "cooling" => self.cooling = parse_scalar(key, value)?,
            "perturbation" => self.perturbation = parse_scalar(key, value)?,
            "sparsity" => self.sparsity = parse_scalar(key, value)?,
            "delta" => self.delta = parse_scalar(key, value)?,
            "delta_list" => self.delta_list = parse_list(key, value)?,
            "extra_samples" => self.extra_samples = parse_scalar(key, value)?,
            "fallback" => self.fallback = parse_scalar(key, value)?,
            "out" => self.out = Some(value.to_string()),
            other => return Err(ConfigError(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError(format!("n = {} must be at least 2", self.n)));
        }
        if self.steps == 0 {
            return Err(ConfigError("steps must be positive".into()));
        }
        if self.trials == 0 {
            return Err(ConfigError("trials must be positive".into()));
        }
        if self.c == 0 {
            return Err(ConfigError("c must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(ConfigError(format!("eta = {} outside (0, 1]", self.eta)));
        }
        if self.kappa < 1.0 {
            return Err(ConfigError(format!("kappa = {} below 1", self.kappa)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ConfigError(format!("delta = {} outside (0, 1)", self.delta)));
        }
        if self.n_list.is_empty() {
            return Err(ConfigError("n_list must not be empty".into()));
        }
        if let Some(&bad) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(ConfigError(format!("n_list entry {bad} must be at least 2")));
        }
        if let Some(&bad) = self
            .delta_list
            .iter()
            .find(|&&d| !(d > 0.0 && d < 1.0))
        {
            return Err(ConfigError(format!("delta_list entry {bad} outside (0, 1)")));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(ConfigError(format!("sparsity = {} outside [0, 1]", self.sparsity)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn parses_assignments_comments_and_lists() {
        let text = "\
# experiment
mode = scaling   # cost sweep
n_list = 4, 8,16
delta = 0.2
trials = 25
fallback = false
out = run.ndjson
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.mode, RunMode::Scaling);
        assert_eq!(cfg.n_list, vec![4, 8, 16]);
        assert_eq!(cfg.delta, 0.2);
        assert_eq!(cfg.trials, 25);
        assert!(!cfg.fallback);
        assert_eq!(cfg.out.as_deref(), Some("run.ndjson"));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let err = ExperimentConfig::parse("bogus = 3").unwrap_err();
        assert!(err.0.contains("unknown key"), "{err}");
        let err = ExperimentConfig::parse("n = 4\nn = 8").unwrap_err();
        assert!(err.0.contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_malformed_lines_and_values() {
        assert!(ExperimentConfig::parse("just words").is_err());
        assert!(ExperimentConfig::parse("n = many").is_err());
        assert!(ExperimentConfig::parse("mode = warp").is_err());
        assert!(ExperimentConfig::parse("family = bogus").is_err());
    }

    #[test]
    fn validate_rejects_out_of_range_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.n = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.eta = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.delta_list = vec![0.2, 0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mode_and_family_names_round_trip() {
        for mode in [
            RunMode::Protocol,
            RunMode::Scaling,
            RunMode::LemmaSuite,
            RunMode::SpectralSuite,
        ] {
            assert_eq!(mode.as_str().parse::<RunMode>().unwrap(), mode);
        }
        for family in [
            SequenceFamily::ConstantChain,
            SequenceFamily::MetropolisAnnealing,
            SequenceFamily::PerturbedWeights,
        ] {
            assert_eq!(parse_family(family_name(family)).unwrap(), family);
        }
    }
}
