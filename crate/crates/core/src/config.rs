//! Experiment configuration.
//!
//! Experiments are described in TOML. Sensor ids in the file are one-based.
//!
//! ```toml
//! k = 3
//! alpha = 0.01
//! beta = 0.01
//! n_trials = 1000
//! base_seed = 42
//! horizon_multiplier = 50.0                     # optional, default 50
//! deltas = [1.0, 1.0, 1.0]                      # required by decentralized strategies
//! subsets_to_test = [[1], [2], [3], [1, 2, 3]]  # optional, default singletons + full set
//! parallel = true                               # optional, default true
//!
//! [strategy]
//! kind = "decentralized_one_bit"
//! # subset = [1, 2]                               for kind = "oracle_sprt"
//! # prior = [{ subset = [1], weight = 0.5 }]      for kind = "mixture_brute_force"
//!
//! # Either one [model] shared by every sensor ...
//! [model]
//! kind = "gaussian_mean_shift"
//! mu = 1.0
//!
//! # ... or exactly k [[models]] tables, one per sensor.
//! # [[models]]
//! # kind = "bernoulli"
//! # p0 = 0.3
//! # p1 = 0.7
//! ```

use serde::Deserialize;
use thiserror::Error;

use crate::calibration::{calibrate, Thresholds};
use crate::fusion::{StrategyKind, SubsetPrior};
use crate::model::ObservationModel;
use crate::subset::SensorSet;

pub const DEFAULT_HORIZON_MULTIPLIER: f64 = 50.0;
pub const MIN_TRIALS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("could not parse config: {0}")]
    Syntax(String),
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub k: usize,
    pub models: Vec<ObservationModel>,
    pub alpha: f64,
    pub beta: f64,
    pub strategy: StrategyKind,
    /// Per-sensor communication steps. Centralized strategies only use them
    /// for overshoot diagnostics.
    pub deltas: Vec<f64>,
    pub subsets_to_test: Vec<SensorSet>,
    pub n_trials: u64,
    pub base_seed: u64,
    pub horizon_multiplier: f64,
    /// Run trials on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl ExperimentConfig {
    /// A config with the documented defaults: unit deltas, singletons plus
    /// the full set as test subsets, 1000 trials, seed 0.
    pub fn new(
        models: Vec<ObservationModel>,
        alpha: f64,
        beta: f64,
        strategy: StrategyKind,
    ) -> Result<Self, ConfigError> {
        let k = models.len();
        let cfg = ExperimentConfig {
            k,
            models,
            alpha,
            beta,
            strategy,
            deltas: vec![1.0; k],
            subsets_to_test: SensorSet::singletons_and_full(k),
            n_trials: 1000,
            base_seed: 0,
            horizon_multiplier: DEFAULT_HORIZON_MULTIPLIER,
            parallel: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same model on each of `k` sensors.
    pub fn homogeneous(
        k: usize,
        model: ObservationModel,
        alpha: f64,
        beta: f64,
        strategy: StrategyKind,
    ) -> Result<Self, ConfigError> {
        Self::new(vec![model; k], alpha, beta, strategy)
    }

    pub fn with_deltas(mut self, delta: f64) -> Result<Self, ConfigError> {
        self.deltas = vec![delta; self.k];
        self.validate()?;
        Ok(self)
    }

    pub fn with_strategy(mut self, strategy: StrategyKind) -> Result<Self, ConfigError> {
        self.strategy = strategy;
        self.validate()?;
        Ok(self)
    }

    pub fn thresholds(&self) -> Thresholds {
        let k = u32::try_from(self.k).expect("validated k fits in u32");
        calibrate(self.alpha, self.beta, k).expect("validated probabilities")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(invalid("k", "must be a positive integer"));
        }
        if u32::try_from(self.k).is_err() {
            return Err(invalid("k", "too large"));
        }
        if self.models.len() != self.k {
            return Err(invalid(
                "models",
                format!("expected {} entries, got {}", self.k, self.models.len()),
            ));
        }
        for (i, m) in self.models.iter().enumerate() {
            m.validate()
                .map_err(|e| invalid(format!("models[{}]", i + 1), e.to_string()))?;
        }
        for (name, p) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(invalid(name, format!("must lie strictly inside (0, 1), got {p}")));
            }
        }
        if self.deltas.len() != self.k {
            return Err(invalid(
                "deltas",
                format!("expected {} entries, got {}", self.k, self.deltas.len()),
            ));
        }
        for (i, d) in self.deltas.iter().enumerate() {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(invalid(
                    format!("deltas[{}]", i + 1),
                    format!("must be positive and finite, got {d}"),
                ));
            }
        }
        if self.subsets_to_test.is_empty() {
            return Err(invalid("subsets_to_test", "must list at least one subset"));
        }
        for (i, s) in self.subsets_to_test.iter().enumerate() {
            if s.max_id() >= self.k {
                return Err(invalid(
                    format!("subsets_to_test[{}]", i + 1),
                    format!("subset {s} exceeds k = {}", self.k),
                ));
            }
        }
        match &self.strategy {
            StrategyKind::OracleSprt(s) if s.max_id() >= self.k => {
                return Err(invalid("strategy.subset", format!("subset {s} exceeds k = {}", self.k)));
            }
            StrategyKind::MixtureBruteForce(prior) => {
                if let Some((s, _)) = prior.entries().iter().find(|(s, _)| s.max_id() >= self.k) {
                    return Err(invalid(
                        "strategy.prior",
                        format!("subset {s} exceeds k = {}", self.k),
                    ));
                }
            }
            _ => {}
        }
        if self.n_trials < MIN_TRIALS {
            return Err(invalid(
                "n_trials",
                format!("must be at least {MIN_TRIALS}, got {}", self.n_trials),
            ));
        }
        if !(self.horizon_multiplier > 0.0 && self.horizon_multiplier.is_finite()) {
            return Err(invalid(
                "horizon_multiplier",
                format!("must be positive and finite, got {}", self.horizon_multiplier),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    k: Option<i64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    n_trials: Option<i64>,
    base_seed: Option<u64>,
    horizon_multiplier: Option<f64>,
    deltas: Option<Vec<f64>>,
    subsets_to_test: Option<Vec<Vec<i64>>>,
    parallel: Option<bool>,
    strategy: Option<RawStrategy>,
    model: Option<ObservationModel>,
    models: Option<Vec<ObservationModel>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: String,
    subset: Option<Vec<i64>>,
    prior: Option<Vec<RawPriorEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPriorEntry {
    subset: Vec<i64>,
    weight: f64,
}

fn parse_subset(ids: &[i64], k: usize, field: &str) -> Result<SensorSet, ConfigError> {
    let ids: Vec<usize> = ids
        .iter()
        .map(|&id| usize::try_from(id).map_err(|_| invalid(field, format!("sensor id {id} is negative"))))
        .collect::<Result<_, _>>()?;
    SensorSet::from_one_based(&ids, k).map_err(|e| invalid(field, e.to_string()))
}

fn parse_strategy(raw: RawStrategy, k: usize) -> Result<StrategyKind, ConfigError> {
    match raw.kind.as_str() {
        "centralized_positive_part" => Ok(StrategyKind::CentralizedPositivePart),
        "decentralized_full_value" => Ok(StrategyKind::DecentralizedFullValue),
        "decentralized_one_bit" => Ok(StrategyKind::DecentralizedOneBit),
        "oracle_sprt" => {
            let ids = raw.subset.ok_or(ConfigError::Missing("strategy.subset"))?;
            Ok(StrategyKind::OracleSprt(parse_subset(&ids, k, "strategy.subset")?))
        }
        "mixture_brute_force" => {
            let prior = match raw.prior {
                None => SubsetPrior::uniform_power_set(k)
                    .map_err(|e| invalid("strategy.prior", e.to_string()))?,
                Some(entries) => {
                    let entries = entries
                        .into_iter()
                        .enumerate()
                        .map(|(i, e)| {
                            let field = format!("strategy.prior[{}].subset", i + 1);
                            Ok((parse_subset(&e.subset, k, &field)?, e.weight))
                        })
                        .collect::<Result<Vec<_>, ConfigError>>()?;
                    SubsetPrior::new(entries).map_err(|e| invalid("strategy.prior", e.to_string()))?
                }
            };
            Ok(StrategyKind::MixtureBruteForce(prior))
        }
        other => Err(invalid("strategy.kind", format!("unknown strategy `{other}`"))),
    }
}

/// Parses and validates a TOML experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;

    let k = raw.k.ok_or(ConfigError::Missing("k"))?;
    let k = usize::try_from(k)
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| invalid("k", format!("must be a positive integer, got {k}")))?;

    let models = match (raw.model, raw.models) {
        (Some(_), Some(_)) => return Err(invalid("models", "give either `model` or `models`, not both")),
        (Some(m), None) => vec![m; k],
        (None, Some(ms)) => ms,
        (None, None) => return Err(ConfigError::Missing("models")),
    };

    let alpha = raw.alpha.ok_or(ConfigError::Missing("alpha"))?;
    let beta = raw.beta.ok_or(ConfigError::Missing("beta"))?;
    let strategy = parse_strategy(raw.strategy.ok_or(ConfigError::Missing("strategy"))?, k)?;

    let deltas = match raw.deltas {
        Some(d) => d,
        None if strategy.is_decentralized() => return Err(ConfigError::Missing("deltas")),
        None => vec![1.0; k],
    };

    let subsets_to_test = match raw.subsets_to_test {
        None => SensorSet::singletons_and_full(k),
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(i, ids)| parse_subset(ids, k, &format!("subsets_to_test[{}]", i + 1)))
            .collect::<Result<_, _>>()?,
    };

    let n_trials = raw.n_trials.ok_or(ConfigError::Missing("n_trials"))?;
    let n_trials =
        u64::try_from(n_trials).map_err(|_| invalid("n_trials", format!("must be positive, got {n_trials}")))?;

    let cfg = ExperimentConfig {
        k,
        models,
        alpha,
        beta,
        strategy,
        deltas,
        subsets_to_test,
        n_trials,
        base_seed: raw.base_seed.ok_or(ConfigError::Missing("base_seed"))?,
        horizon_multiplier: raw.horizon_multiplier.unwrap_or(DEFAULT_HORIZON_MULTIPLIER),
        parallel: raw.parallel.unwrap_or(true),
    };
    cfg.validate()?;
    Ok(cfg)
}
