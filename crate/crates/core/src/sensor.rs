//! Sensor-side state machine.
//!
//! Each sensor accumulates its LLR `Z_t`, the running maximum `M_t`, and runs
//! the event-triggered recursion: it communicates at the first `t` where
//! `Z_t - Z_{last comm} >= delta`. Independently it raises a one-shot null
//! alarm the first time `Z_t <= -A`.

use serde::Serialize;
use thiserror::Error;

use crate::fusion::StrategyKind;
use crate::model::{ModelError, Observation, ObservationModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("communication step must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("null threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("strategy {0} does not use a per-sensor surrogate statistic")]
    NotApplicable(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Zero-based sensor index.
    pub id: usize,
    pub model: ObservationModel,
    /// Communication step of the event-triggered recursion.
    pub delta: f64,
    /// The calibrated `A`, used for the one-shot null alarm.
    pub a_threshold: f64,
}

impl SensorConfig {
    pub fn new(
        id: usize,
        model: ObservationModel,
        delta: f64,
        a_threshold: f64,
    ) -> Result<Self, SensorError> {
        model.validate()?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(SensorError::BadDelta(delta));
        }
        if !(a_threshold > 0.0 && a_threshold.is_finite()) {
            return Err(SensorError::BadThreshold(a_threshold));
        }
        Ok(SensorConfig {
            id,
            model,
            delta,
            a_threshold,
        })
    }
}

/// What a sensor puts on the uplink when the recursion triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkEncoding {
    /// Nothing is transmitted; the fusion center reads exact values instead.
    Silent,
    /// The realized LLR increment since the previous communication.
    FullValue,
    /// A single bit meaning "Z rose by at least delta".
    OneBit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageKind {
    FullValue { ell: f64 },
    OneBit,
    NullAlarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UplinkMessage {
    /// Zero-based sensor index.
    pub sensor_id: usize,
    pub kind: MessageKind,
    pub emitted_at: u64,
}

/// Running statistics of one sensor. Starts at `Z_0 = M_0 = 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorState {
    pub t: u64,
    /// Cumulative LLR.
    pub z: f64,
    /// `max(0, max_{s <= t} Z_s)`.
    pub m: f64,
    /// Number of communications so far.
    pub n_comm: u64,
    /// Value of `z` at the most recent communication (0 before any).
    pub z_last_comm: f64,
    /// Sum of the overshoots `ell_n - delta`.
    pub overshoot_sum: f64,
    pub null_alarm_raised: bool,
}

/// Messages produced by a single observation: at most one communication
/// and at most one null alarm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Emitted {
    pub comm: Option<UplinkMessage>,
    pub alarm: Option<UplinkMessage>,
}

impl Emitted {
    pub fn iter(&self) -> impl Iterator<Item = &UplinkMessage> {
        self.comm.iter().chain(self.alarm.iter())
    }

    pub fn len(&self) -> usize {
        usize::from(self.comm.is_some()) + usize::from(self.alarm.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SensorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Takes one observation and advances the local clock.
    pub fn observe(
        &mut self,
        config: &SensorConfig,
        x: Observation,
        encoding: LinkEncoding,
    ) -> Result<Emitted, ModelError> {
        let increment = config.model.llr_increment(x)?;
        Ok(self.apply_increment(config, increment, encoding))
    }

    /// Advances the state by an already computed LLR increment.
    pub fn apply_increment(
        &mut self,
        config: &SensorConfig,
        increment: f64,
        encoding: LinkEncoding,
    ) -> Emitted {
        self.t += 1;
        self.z += increment;
        if self.z > self.m {
            self.m = self.z;
        }
        let mut out = Emitted::default();

        // One trigger per tick at most; a large jump lands in the overshoot.
        let ell = self.z - self.z_last_comm;
        if ell >= config.delta {
            self.n_comm += 1;
            self.overshoot_sum += ell - config.delta;
            self.z_last_comm = self.z;
            let kind = match encoding {
                LinkEncoding::Silent => None,
                LinkEncoding::FullValue => Some(MessageKind::FullValue { ell }),
                LinkEncoding::OneBit => Some(MessageKind::OneBit),
            };
            out.comm = kind.map(|kind| UplinkMessage {
                sensor_id: config.id,
                kind,
                emitted_at: self.t,
            });
        }

        if !self.null_alarm_raised && self.z <= -config.a_threshold {
            self.null_alarm_raised = true;
            if encoding != LinkEncoding::Silent {
                out.alarm = Some(UplinkMessage {
                    sensor_id: config.id,
                    kind: MessageKind::NullAlarm,
                    emitted_at: self.t,
                });
            }
        }
        out
    }

    /// The surrogate statistic this sensor contributes to the upper rule.
    pub fn local_hat_z(&self, config: &SensorConfig, strategy: &StrategyKind) -> Result<f64, SensorError> {
        match strategy {
            StrategyKind::CentralizedPositivePart => Ok(self.z.max(0.0)),
            StrategyKind::DecentralizedFullValue => Ok(self.z_last_comm),
            StrategyKind::DecentralizedOneBit => Ok(config.delta * self.n_comm as f64),
            other => Err(SensorError::NotApplicable(other.name())),
        }
    }

    /// Mean overshoot over this sensor's communications, if any.
    pub fn mean_overshoot(&self) -> Option<f64> {
        (self.n_comm > 0).then(|| self.overshoot_sum / self.n_comm as f64)
    }
}
