//! Fusion center: combines per-sensor information into the two one-sided
//! stopping rules and the final verdict.
//!
//! The upper rule fires once `sum_k hatZ^k >= B` (accept H1). The lower rule
//! fires once every sensor's LLR is at or below `-A` (accept H0); centralized
//! strategies evaluate this as `max_k Z^k <= -A` on exact values, the
//! decentralized ones as "all K null alarms received". When both fire at the
//! same tick the verdict is H1.
//!
//! Two comparators share the same interface: the oracle SPRT that knows the
//! affected subset, and the brute-force mixture over an explicit list of
//! subsets.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::Thresholds;
use crate::sensor::{LinkEncoding, MessageKind, UplinkMessage};
use crate::subset::SensorSet;

/// Largest number of sensors for which the full power-set prior is built.
pub const MAX_MIXTURE_SENSORS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("sensor {0} sent a second null alarm")]
    DuplicateNullAlarm(usize),
    #[error("message from sensor {id} but only {k} sensors are registered")]
    UnknownSensor { id: usize, k: usize },
    #[error("{kind} message is not part of the {strategy} protocol")]
    UnexpectedMessage {
        kind: &'static str,
        strategy: &'static str,
    },
    #[error("mixture over {0} sensors exceeds the brute-force limit of {MAX_MIXTURE_SENSORS}")]
    Capacity(usize),
    #[error("mixture prior must have at least one subset with a positive finite weight")]
    EmptyPrior,
    #[error("mixture weight {0} is not positive and finite")]
    BadWeight(f64),
    #[error("prior subset {subset} refers to a sensor beyond the {k} available")]
    SubsetOutOfRange { subset: String, k: usize },
}

/// Explicit prior over subsets for the mixture comparator.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPrior {
    entries: Vec<(SensorSet, f64)>,
    log_weights: Vec<f64>,
}

impl SubsetPrior {
    pub fn new(entries: Vec<(SensorSet, f64)>) -> Result<Self, FusionError> {
        if entries.is_empty() {
            return Err(FusionError::EmptyPrior);
        }
        if let Some(&(_, w)) = entries.iter().find(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(FusionError::BadWeight(w));
        }
        let log_weights = entries.iter().map(|(_, w)| w.ln()).collect();
        Ok(SubsetPrior {
            entries,
            log_weights,
        })
    }

    /// Uniform weights `1 / (2^k - 1)` over every non-empty subset of `k` sensors.
    pub fn uniform_power_set(k: usize) -> Result<Self, FusionError> {
        if k == 0 {
            return Err(FusionError::EmptyPrior);
        }
        if k > MAX_MIXTURE_SENSORS {
            return Err(FusionError::Capacity(k));
        }
        let count = (1u64 << k) - 1;
        let w = 1.0 / count as f64;
        let entries = (1..=count)
            .map(|mask| (SensorSet::from_mask(mask).expect("mask is non-zero"), w))
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(SensorSet, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn max_sensor(&self) -> usize {
        self.entries.iter().map(|(s, _)| s.max_id()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyKind {
    /// `hatZ^k = max(Z^k, 0)`, with every sensor reporting its exact LLR each tick.
    CentralizedPositivePart,
    /// `hatZ^k` is `Z^k` at its last communication; messages carry the increment.
    DecentralizedFullValue,
    /// `hatZ^k = delta^k * N^k`; each communication is a single bit.
    DecentralizedOneBit,
    /// SPRT on `sum_{k in A} Z^k` for a known subset `A`.
    OracleSprt(SensorSet),
    /// SPRT on `log sum_B p_B exp(Z^B)` over the listed subsets.
    MixtureBruteForce(SubsetPrior),
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::CentralizedPositivePart => "centralized_positive_part",
            StrategyKind::DecentralizedFullValue => "decentralized_full_value",
            StrategyKind::DecentralizedOneBit => "decentralized_one_bit",
            StrategyKind::OracleSprt(_) => "oracle_sprt",
            StrategyKind::MixtureBruteForce(_) => "mixture_brute_force",
        }
    }

    pub fn is_decentralized(&self) -> bool {
        matches!(
            self,
            StrategyKind::DecentralizedFullValue | StrategyKind::DecentralizedOneBit
        )
    }

    /// What sensors transmit under this strategy.
    pub fn link_encoding(&self) -> LinkEncoding {
        match self {
            StrategyKind::DecentralizedFullValue => LinkEncoding::FullValue,
            StrategyKind::DecentralizedOneBit => LinkEncoding::OneBit,
            _ => LinkEncoding::Silent,
        }
    }

    /// Whether sensor `id` streams its exact LLR to the fusion center every tick.
    pub fn reports_exact(&self, id: usize) -> bool {
        match self {
            StrategyKind::CentralizedPositivePart | StrategyKind::MixtureBruteForce(_) => true,
            StrategyKind::OracleSprt(subset) => subset.contains(id),
            _ => false,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptH0,
    AcceptH1,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub decision: Decision,
    pub stopping_time: u64,
    pub messages_total: u64,
}

/// Everything the fusion center knows at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    pub t: u64,
    /// `hatZ^k` as reconstructed from the uplink.
    pub hat_z_per_sensor: Vec<f64>,
    /// Per-sensor one-bit counts; one-bit `hatZ^k` is recomputed as `delta * count`.
    comm_counts: Vec<u64>,
    null_alarms: Vec<bool>,
    null_alarm_count: usize,
    /// Exact per-sensor LLRs, used by centralized strategies and comparators.
    pub z_exact_per_sensor: Vec<f64>,
    pub messages_total: u64,
}

impl FusionState {
    pub fn new(k: usize) -> Self {
        FusionState {
            t: 0,
            hat_z_per_sensor: vec![0.0; k],
            comm_counts: vec![0; k],
            null_alarms: vec![false; k],
            null_alarm_count: 0,
            z_exact_per_sensor: vec![0.0; k],
            messages_total: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.hat_z_per_sensor.len()
    }

    pub fn null_alarm_count(&self) -> usize {
        self.null_alarm_count
    }

    pub fn has_null_alarm(&self, id: usize) -> bool {
        self.null_alarms[id]
    }

    /// Sum of the surrogate statistics, `hatZ_t`.
    pub fn hat_z_total(&self) -> f64 {
        self.hat_z_per_sensor.iter().sum()
    }

    /// Applies one uplink message.
    pub fn ingest(
        &mut self,
        msg: &UplinkMessage,
        strategy: &StrategyKind,
        delta_of_sender: f64,
    ) -> Result<(), FusionError> {
        let id = msg.sensor_id;
        if id >= self.k() {
            return Err(FusionError::UnknownSensor { id, k: self.k() });
        }
        let unexpected = |kind| FusionError::UnexpectedMessage {
            kind,
            strategy: strategy.name(),
        };
        match msg.kind {
            MessageKind::OneBit => {
                if *strategy != StrategyKind::DecentralizedOneBit {
                    return Err(unexpected("one_bit"));
                }
                self.comm_counts[id] += 1;
                self.hat_z_per_sensor[id] = delta_of_sender * self.comm_counts[id] as f64;
            }
            MessageKind::FullValue { ell } => {
                if *strategy != StrategyKind::DecentralizedFullValue {
                    return Err(unexpected("full_value"));
                }
                self.comm_counts[id] += 1;
                self.hat_z_per_sensor[id] += ell;
            }
            MessageKind::NullAlarm => {
                if !strategy.is_decentralized() {
                    return Err(unexpected("null_alarm"));
                }
                if self.null_alarms[id] {
                    return Err(FusionError::DuplicateNullAlarm(id));
                }
                self.null_alarms[id] = true;
                self.null_alarm_count += 1;
            }
        }
        self.messages_total += 1;
        Ok(())
    }

    /// Records sensor `id`'s exact LLR. When `transmitted`, it counts as one
    /// uplink message; otherwise it is simulator-side bookkeeping only.
    pub fn record_exact(&mut self, id: usize, z: f64, strategy: &StrategyKind, transmitted: bool) {
        self.z_exact_per_sensor[id] = z;
        if *strategy == StrategyKind::CentralizedPositivePart {
            self.hat_z_per_sensor[id] = z.max(0.0);
        }
        if transmitted {
            self.messages_total += 1;
        }
    }

    /// `max_k Z^k`, the statistic of the centralized lower rule.
    pub fn max_exact(&self) -> f64 {
        self.z_exact_per_sensor
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the upper rule `hatZ >= B` fires now.
    pub fn upper_fires(&self, thresholds: &Thresholds) -> bool {
        self.hat_z_total() >= thresholds.b
    }

    /// Whether the lower rule fires now.
    pub fn lower_fires(&self, thresholds: &Thresholds, strategy: &StrategyKind) -> bool {
        if strategy.is_decentralized() {
            self.null_alarm_count == self.k()
        } else {
            self.max_exact() <= -thresholds.a
        }
    }

    fn verdict(&self, decision: Decision) -> Verdict {
        Verdict {
            decision,
            stopping_time: self.t,
            messages_total: self.messages_total,
        }
    }

    /// Applies the strategy's stopping rule at the current time.
    pub fn check_stop(
        &self,
        thresholds: &Thresholds,
        strategy: &StrategyKind,
    ) -> Result<Option<Verdict>, FusionError> {
        let decision = match strategy {
            StrategyKind::OracleSprt(subset) => {
                oracle_sprt_step(subset.sum_over(&self.z_exact_per_sensor), thresholds)
            }
            StrategyKind::MixtureBruteForce(prior) => {
                let stat = mixture_statistic(&self.z_exact_per_sensor, prior)?;
                oracle_sprt_step(stat, thresholds)
            }
            _ => {
                if self.upper_fires(thresholds) {
                    Some(Decision::AcceptH1)
                } else if self.lower_fires(thresholds, strategy) {
                    Some(Decision::AcceptH0)
                } else {
                    None
                }
            }
        };
        Ok(decision.map(|d| self.verdict(d)))
    }

    /// Verdict for a trial that ran out of time.
    pub fn censor(&self) -> Verdict {
        self.verdict(Decision::Censored)
    }
}

/// `log sum_B p_B exp(sum_{k in B} z_k)`, evaluated with log-sum-exp.
pub fn mixture_statistic(z: &[f64], prior: &SubsetPrior) -> Result<f64, FusionError> {
    if z.len() > MAX_MIXTURE_SENSORS {
        return Err(FusionError::Capacity(z.len()));
    }
    if prior.is_empty() {
        return Err(FusionError::EmptyPrior);
    }
    if prior.max_sensor() >= z.len() {
        let (subset, _) = prior
            .entries
            .iter()
            .find(|(s, _)| s.max_id() >= z.len())
            .expect("max_sensor found one");
        return Err(FusionError::SubsetOutOfRange {
            subset: subset.to_string(),
            k: z.len(),
        });
    }
    let exponents: Vec<f64> = prior
        .entries
        .iter()
        .zip(&prior.log_weights)
        .map(|((subset, _), lw)| lw + subset.sum_over(z))
        .collect();
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Two-sided SPRT decision on an already aggregated LLR.
pub fn oracle_sprt_step(z_subset_sum: f64, thresholds: &Thresholds) -> Option<Decision> {
    if z_subset_sum >= thresholds.b {
        Some(Decision::AcceptH1)
    } else if z_subset_sum <= -thresholds.a {
        Some(Decision::AcceptH0)
    } else {
        None
    }
}
