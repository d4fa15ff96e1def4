//! Monte Carlo harness.
//!
//! A trial steps every sensor and the fusion center one tick at a time until
//! a verdict or the horizon. Each sensor draws from its own ChaCha stream
//! keyed by `(seed, sensor id)`, so different strategies, thresholds or
//! deltas run on the same seed see identical noise.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::calibration::Thresholds;
use crate::config::{ExperimentConfig, MIN_TRIALS};
use crate::fusion::{Decision, FusionError, FusionState, StrategyKind, Verdict};
use crate::model::{ModelError, ObservationModel};
use crate::sensor::{SensorConfig, SensorError, SensorState};
use crate::subset::SensorSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("at least {MIN_TRIALS} trials per cell are required, got {0}")]
    TooFewTrials(u64),
    #[error("affected subset {subset} is not within the {k} sensors")]
    BadTruth { subset: String, k: usize },
    #[error("the one-sided upper rule is only defined for the surrogate-statistic strategies, not {0}")]
    NoUpperRule(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroundTruth {
    H0,
    /// Signal present exactly at the listed sensors.
    H1(SensorSet),
}

impl GroundTruth {
    pub fn affects(&self, id: usize) -> bool {
        match self {
            GroundTruth::H0 => false,
            GroundTruth::H1(s) => s.contains(id),
        }
    }

    /// The decision that counts as an error under this truth.
    pub fn wrong_decision(&self) -> Decision {
        match self {
            GroundTruth::H0 => Decision::AcceptH1,
            GroundTruth::H1(_) => Decision::AcceptH0,
        }
    }

    pub fn hypothesis_label(&self) -> &'static str {
        match self {
            GroundTruth::H0 => "h0",
            GroundTruth::H1(_) => "h1",
        }
    }

    pub fn subset_label(&self) -> String {
        match self {
            GroundTruth::H0 => "none".to_string(),
            GroundTruth::H1(s) => s.to_string(),
        }
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundTruth::H0 => f.write_str("h0"),
            GroundTruth::H1(s) => write!(f, "h1({s})"),
        }
    }
}

/// First times the two readings of the lower rule would have fired, if they
/// did so by the end of the trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NullRuleTimes {
    /// First `t` with `max_k Z^k_t <= -A`.
    pub max_rule: Option<u64>,
    /// First `t` by which every sensor has raised its one-shot alarm.
    pub alarm_rule: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub verdict: Verdict,
    pub ground_truth: GroundTruth,
    pub seed: u64,
    pub per_sensor_messages: Vec<u64>,
    /// Mean overshoot over all communications of all sensors; `None` if no
    /// sensor communicated.
    pub mean_overshoot_observed: Option<f64>,
    pub null_rule_times: NullRuleTimes,
}

/// Which rules may end a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StopRules {
    Both,
    UpperOnly,
}

/// `e0 = |log beta| / min_k I0^k` and `e1 = |log alpha| / sum_{k in A} I1^k`.
pub fn theoretical_bounds(
    alpha: f64,
    beta: f64,
    models: &[ObservationModel],
    subset: &SensorSet,
) -> (f64, f64) {
    let min_i0 = models
        .iter()
        .map(|m| m.kl_numbers().i0)
        .fold(f64::INFINITY, f64::min);
    let i1: f64 = subset.ids().iter().map(|&k| models[k].kl_numbers().i1).sum();
    (beta.ln().abs() / min_i0, alpha.ln().abs() / i1)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(n >= 1 && successes <= n, "wilson_ci needs 0 <= successes <= n, n >= 1");
    let z = normal_quantile(0.5 + level / 2.0);
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

impl ErrorEstimate {
    pub fn from_counts(errors: u64, n: u64) -> Self {
        let (ci_low, ci_high) = wilson_ci(errors, n, 0.95);
        ErrorEstimate {
            rate: errors as f64 / n as f64,
            ci_low,
            ci_high,
            n,
        }
    }
}

/// Sample mean with a normal-approximation 95% interval. All fields are NaN
/// when there were no samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                n: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let half = normal_quantile(0.975) * (var / n as f64).sqrt();
        MeanEstimate {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            n: n as u64,
        }
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Operating characteristics of one (strategy, ground truth) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub truth: GroundTruth,
    pub n_trials: u64,
    /// Type-I rate under H0, type-II rate under H1.
    pub error: ErrorEstimate,
    /// Stopping time over non-censored trials.
    pub mean_stop: MeanEstimate,
    /// `e0` under H0, `e1` for the affected subset under H1.
    pub theoretical_bound: f64,
    pub mean_messages_per_trial: f64,
    pub censored: u64,
    /// Average of the per-trial mean overshoots, over trials that communicated.
    pub mean_overshoot: Option<f64>,
    /// Trials where the max-based and alarm-based lower rules fired at
    /// different times (or only one of them fired).
    pub null_rule_disagreements: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub strategy: String,
    pub thresholds: Thresholds,
    pub horizon: u64,
    /// The H0 cell first, then one H1 cell per tested subset.
    pub cells: Vec<CellSummary>,
}

impl ExperimentSummary {
    pub fn h0(&self) -> &CellSummary {
        &self.cells[0]
    }

    pub fn h1_cells(&self) -> &[CellSummary] {
        &self.cells[1..]
    }

    pub fn type1_rate(&self) -> ErrorEstimate {
        self.h0().error
    }

    pub fn type2_rate(&self, subset: &SensorSet) -> Option<ErrorEstimate> {
        self.cell(&GroundTruth::H1(subset.clone())).map(|c| c.error)
    }

    pub fn cell(&self, truth: &GroundTruth) -> Option<&CellSummary> {
        self.cells.iter().find(|c| &c.truth == truth)
    }

    pub fn censored_count(&self) -> u64 {
        self.cells.iter().map(|c| c.censored).sum()
    }

    pub fn total_trials(&self) -> u64 {
        self.cells.iter().map(|c| c.n_trials).sum()
    }

    /// Messages per trial pooled over every cell.
    pub fn mean_messages_per_trial(&self) -> f64 {
        let total: f64 = self
            .cells
            .iter()
            .map(|c| c.mean_messages_per_trial * c.n_trials as f64)
            .sum();
        total / self.total_trials() as f64
    }
}

/// A configuration prepared for running trials: thresholds calibrated and
/// sensor configs built once.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ExperimentConfig,
    thresholds: Thresholds,
    sensors: Vec<SensorConfig>,
    horizon: u64,
}

impl Simulator {
    pub fn new(config: &ExperimentConfig) -> Result<Self, SimError> {
        let thresholds = config.thresholds();
        Self::with_thresholds(config, thresholds)
    }

    /// Uses the given thresholds instead of calibrating them from the config.
    pub fn with_thresholds(config: &ExperimentConfig, thresholds: Thresholds) -> Result<Self, SimError> {
        let sensors = config
            .models
            .iter()
            .zip(&config.deltas)
            .enumerate()
            .map(|(id, (&model, &delta))| SensorConfig::new(id, model, delta, thresholds.a))
            .collect::<Result<Vec<_>, _>>()?;
        let horizon = default_horizon(config);
        Ok(Simulator {
            config: config.clone(),
            thresholds,
            sensors,
            horizon,
        })
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon.max(1);
        self
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn check_truth(&self, truth: &GroundTruth) -> Result<(), SimError> {
        if let GroundTruth::H1(s) = truth {
            if s.max_id() >= self.config.k {
                return Err(SimError::BadTruth {
                    subset: s.to_string(),
                    k: self.config.k,
                });
            }
        }
        Ok(())
    }

    /// Runs one trial of the configured test.
    pub fn run_trial(&self, truth: &GroundTruth, seed: u64) -> Result<TrialRecord, SimError> {
        self.simulate(truth, seed, StopRules::Both)
    }

    /// First time the upper rule `hatZ >= B` fires when the lower rule is
    /// ignored; `None` if it does not fire within the horizon.
    pub fn upper_rule_time(&self, truth: &GroundTruth, seed: u64) -> Result<Option<u64>, SimError> {
        if !matches!(
            self.config.strategy,
            StrategyKind::CentralizedPositivePart
                | StrategyKind::DecentralizedFullValue
                | StrategyKind::DecentralizedOneBit
        ) {
            return Err(SimError::NoUpperRule(self.config.strategy.name()));
        }
        let record = self.simulate(truth, seed, StopRules::UpperOnly)?;
        Ok(match record.verdict.decision {
            Decision::AcceptH1 => Some(record.verdict.stopping_time),
            _ => None,
        })
    }

    fn simulate(&self, truth: &GroundTruth, seed: u64, rules: StopRules) -> Result<TrialRecord, SimError> {
        self.check_truth(truth)?;
        let k = self.config.k;
        let strategy = &self.config.strategy;
        let encoding = strategy.link_encoding();
        let thresholds = &self.thresholds;

        let mut rngs: Vec<ChaCha8Rng> = (0..k)
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id as u64);
                rng
            })
            .collect();
        let affected: Vec<bool> = (0..k).map(|id| truth.affects(id)).collect();
        let reports_exact: Vec<bool> = (0..k).map(|id| strategy.reports_exact(id)).collect();
        let mut states = vec![SensorState::new(); k];
        let mut fusion = FusionState::new(k);
        let mut per_sensor_messages = vec![0u64; k];
        let mut null_rule_times = NullRuleTimes::default();
        let mut verdict = None;

        for t in 1..=self.horizon {
            fusion.t = t;
            for id in 0..k {
                let sensor = &self.sensors[id];
                let x = sensor.model.sample(affected[id], &mut rngs[id]);
                let emitted = states[id].observe(sensor, x, encoding)?;
                fusion.record_exact(id, states[id].z, strategy, reports_exact[id]);
                if reports_exact[id] {
                    per_sensor_messages[id] += 1;
                }
                for msg in emitted.iter() {
                    fusion.ingest(msg, strategy, sensor.delta)?;
                    per_sensor_messages[id] += 1;
                }
            }

            if null_rule_times.max_rule.is_none() && fusion.max_exact() <= -thresholds.a {
                null_rule_times.max_rule = Some(t);
            }
            if null_rule_times.alarm_rule.is_none() && states.iter().all(|s| s.null_alarm_raised) {
                null_rule_times.alarm_rule = Some(t);
            }

            let stop = match rules {
                StopRules::Both => fusion.check_stop(thresholds, strategy)?,
                StopRules::UpperOnly => fusion.upper_fires(thresholds).then_some(Verdict {
                    decision: Decision::AcceptH1,
                    stopping_time: t,
                    messages_total: fusion.messages_total,
                }),
            };
            if stop.is_some() {
                verdict = stop;
                break;
            }
        }

        let (n_comm, overshoot): (u64, f64) = states
            .iter()
            .fold((0, 0.0), |(n, o), s| (n + s.n_comm, o + s.overshoot_sum));
        Ok(TrialRecord {
            verdict: verdict.unwrap_or_else(|| fusion.censor()),
            ground_truth: truth.clone(),
            seed,
            per_sensor_messages,
            mean_overshoot_observed: (n_comm > 0).then(|| overshoot / n_comm as f64),
            null_rule_times,
        })
    }

    /// Runs `n_trials` trials per cell (H0 plus each subset) with seeds
    /// `base_seed + i`, and aggregates them.
    pub fn estimate(
        &self,
        subsets: &[SensorSet],
        n_trials: u64,
        base_seed: u64,
    ) -> Result<ExperimentSummary, SimError> {
        if n_trials < MIN_TRIALS {
            return Err(SimError::TooFewTrials(n_trials));
        }
        let truths: Vec<GroundTruth> = std::iter::once(GroundTruth::H0)
            .chain(subsets.iter().cloned().map(GroundTruth::H1))
            .collect();
        let cells = truths
            .iter()
            .map(|truth| self.run_cell(truth, n_trials, base_seed))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExperimentSummary {
            strategy: self.config.strategy.name().to_string(),
            thresholds: self.thresholds,
            horizon: self.horizon,
            cells,
        })
    }

    fn run_cell(&self, truth: &GroundTruth, n_trials: u64, base_seed: u64) -> Result<CellSummary, SimError> {
        self.check_truth(truth)?;
        let run = |i: u64| self.run_trial(truth, base_seed.wrapping_add(i));
        // Collecting preserves index order, so the reduction below sees the
        // same sequence whether or not trials ran in parallel.
        let records: Vec<TrialRecord> = if self.config.parallel {
            (0..n_trials).into_par_iter().map(run).collect::<Result<_, _>>()?
        } else {
            (0..n_trials).map(run).collect::<Result<_, _>>()?
        };
        Ok(self.summarize(truth, &records))
    }

    fn summarize(&self, truth: &GroundTruth, records: &[TrialRecord]) -> CellSummary {
        let n = records.len() as u64;
        let wrong = truth.wrong_decision();
        let errors = records.iter().filter(|r| r.verdict.decision == wrong).count() as u64;
        let censored = records
            .iter()
            .filter(|r| r.verdict.decision == Decision::Censored)
            .count() as u64;
        let stops: Vec<f64> = records
            .iter()
            .filter(|r| r.verdict.decision != Decision::Censored)
            .map(|r| r.verdict.stopping_time as f64)
            .collect();
        let messages: u64 = records.iter().map(|r| r.verdict.messages_total).sum();

        let mut overshoot_sum = 0.0;
        let mut overshoot_trials = 0u64;
        for o in records.iter().filter_map(|r| r.mean_overshoot_observed) {
            overshoot_sum += o;
            overshoot_trials += 1;
        }
        let disagreements = records
            .iter()
            .filter(|r| r.null_rule_times.max_rule != r.null_rule_times.alarm_rule)
            .count() as u64;

        let (alpha, beta, models) = (self.config.alpha, self.config.beta, &self.config.models);
        let theoretical_bound = match truth {
            GroundTruth::H0 => theoretical_bounds(alpha, beta, models, &SensorSet::singleton(0)).0,
            GroundTruth::H1(s) => theoretical_bounds(alpha, beta, models, s).1,
        };
        CellSummary {
            truth: truth.clone(),
            n_trials: n,
            error: ErrorEstimate::from_counts(errors, n),
            mean_stop: MeanEstimate::from_samples(&stops),
            theoretical_bound,
            mean_messages_per_trial: messages as f64 / n as f64,
            censored,
            mean_overshoot: (overshoot_trials > 0).then(|| overshoot_sum / overshoot_trials as f64),
            null_rule_disagreements: disagreements,
        }
    }
}

/// `ceil(multiplier * max(e0, max_A e1))` over the configured test subsets.
pub fn default_horizon(config: &ExperimentConfig) -> u64 {
    let worst = config
        .subsets_to_test
        .iter()
        .map(|s| {
            let (e0, e1) = theoretical_bounds(config.alpha, config.beta, &config.models, s);
            e0.max(e1)
        })
        .fold(0.0f64, f64::max);
    ((config.horizon_multiplier * worst).ceil() as u64).max(1)
}

/// Convenience wrapper: one trial of `config` under `truth`.
pub fn run_trial(config: &ExperimentConfig, truth: &GroundTruth, seed: u64) -> Result<TrialRecord, SimError> {
    Simulator::new(config)?.run_trial(truth, seed)
}

/// Runs the full Monte Carlo study described by `config` for the given subsets.
pub fn estimate_operating_characteristics(
    config: &ExperimentConfig,
    subsets_to_test: &[SensorSet],
    n_trials: u64,
    base_seed: u64,
) -> Result<ExperimentSummary, SimError> {
    Simulator::new(config)?.estimate(subsets_to_test, n_trials, base_seed)
}
