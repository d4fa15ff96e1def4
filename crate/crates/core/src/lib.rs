//! Scalable sequential detection of a signal that may be present in any
//! unknown subset of `K` independent sensors.
//!
//! The test stops at `T* = min(T_up, T_low)`:
//!
//! * `T_up` is the first time `sum_k hatZ^k_t >= B`, where each `hatZ^k` is a
//!   sensor-local surrogate for the LLR bounded by the running maximum
//!   `M^k_t` (positive part, value at last communication, or `delta * N^k_t`);
//! * `T_low` is the first time every sensor's LLR has fallen to `-A`.
//!
//! With `A = |log beta|` and `B` the Erlang(1, K) upper `alpha` quantile, the
//! error probabilities are at most `alpha` and `beta` for every affected
//! subset, with `K` (not `2^K`) operations per step. The decentralized
//! variant needs only one-bit messages, sent whenever a sensor's LLR has
//! risen by `delta` since its last message.
//!
//! Modules follow the data flow: [`model`] draws observations and LLR
//! increments, [`sensor`] runs the per-sensor recursion, [`fusion`] applies
//! the stopping rules, [`calibration`] computes `(A, B)`, [`montecarlo`]
//! estimates operating characteristics and [`experiment`] writes CSV.

pub mod calibration;
pub mod config;
pub mod experiment;
pub mod fusion;
pub mod model;
pub mod montecarlo;
pub mod sensor;
pub mod subset;

pub use calibration::{calibrate, erlang_survival, invert_erlang_survival, Thresholds};
pub use config::{parse_config, ExperimentConfig};
pub use fusion::{mixture_statistic, oracle_sprt_step, Decision, FusionState, StrategyKind, SubsetPrior, Verdict};
pub use model::{Observation, ObservationModel};
pub use montecarlo::{
    estimate_operating_characteristics, run_trial, theoretical_bounds, wilson_ci, ExperimentSummary, GroundTruth,
    Simulator, TrialRecord,
};
pub use sensor::{LinkEncoding, SensorConfig, SensorState, UplinkMessage};
pub use subset::SensorSet;
