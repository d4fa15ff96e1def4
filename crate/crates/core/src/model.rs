//! Per-sensor observation models.
//!
//! Each sensor observes i.i.d. samples from `f0` (noise) or `f1` (signal).
//! A model knows how to draw from either density, evaluate the
//! log-likelihood-ratio increment `log f1(x)/f0(x)`, and report its
//! Kullback-Leibler numbers and the second moment of the increment under
//! `f1`, all in closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("gaussian mean shift must be non-zero and finite, got {0}")]
    ZeroShift(f64),
    #[error("bernoulli probabilities must lie in (0, 1) and differ, got p0={p0}, p1={p1}")]
    BadBernoulli { p0: f64, p1: f64 },
    #[error("observation {0} is outside the bernoulli support {{0, 1}}")]
    OutOfSupport(f64),
}

/// Density pair `(f0, f1)` observed by one sensor.
///
/// `GaussianMeanShift { mu }` is `N(0, 1)` versus `N(mu, 1)`.
/// `Bernoulli { p0, p1 }` is `Bern(p0)` versus `Bern(p1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationModel {
    GaussianMeanShift { mu: f64 },
    Bernoulli { p0: f64, p1: f64 },
}

/// A single sample `X_t` taken by a sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub f64);

/// Kullback-Leibler information numbers of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlNumbers {
    /// `E_0[log f0/f1]`, the drift magnitude of the LLR under noise.
    pub i0: f64,
    /// `E_1[log f1/f0]`, the drift of the LLR under signal.
    pub i1: f64,
}

impl ObservationModel {
    pub fn gaussian(mu: f64) -> Result<Self, ModelError> {
        let model = ObservationModel::GaussianMeanShift { mu };
        model.validate()?;
        Ok(model)
    }

    pub fn bernoulli(p0: f64, p1: f64) -> Result<Self, ModelError> {
        let model = ObservationModel::Bernoulli { p0, p1 };
        model.validate()?;
        Ok(model)
    }

    /// Checks the parameter invariants. Models built through serde skip the
    /// constructors, so config loading calls this explicitly.
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            ObservationModel::GaussianMeanShift { mu } => {
                if mu == 0.0 || !mu.is_finite() {
                    return Err(ModelError::ZeroShift(mu));
                }
            }
            ObservationModel::Bernoulli { p0, p1 } => {
                let open_unit = |p: f64| p > 0.0 && p < 1.0;
                if !open_unit(p0) || !open_unit(p1) || p0 == p1 {
                    return Err(ModelError::BadBernoulli { p0, p1 });
                }
            }
        }
        Ok(())
    }

    /// Draws one observation from `f1` when `under_h1`, otherwise from `f0`.
    ///
    /// The number of random draws consumed does not depend on `under_h1`, so
    /// two runs sharing a stream see coupled noise under either hypothesis.
    pub fn sample<R: Rng + ?Sized>(&self, under_h1: bool, rng: &mut R) -> Observation {
        match *self {
            ObservationModel::GaussianMeanShift { mu } => {
                let noise: f64 = rng.sample(StandardNormal);
                Observation(if under_h1 { mu + noise } else { noise })
            }
            ObservationModel::Bernoulli { p0, p1 } => {
                let p = if under_h1 { p1 } else { p0 };
                let u: f64 = rng.random();
                Observation(if u < p { 1.0 } else { 0.0 })
            }
        }
    }

    /// `log f1(x) / f0(x)`.
    pub fn llr_increment(&self, x: Observation) -> Result<f64, ModelError> {
        match *self {
            ObservationModel::GaussianMeanShift { mu } => Ok(mu * x.0 - 0.5 * mu * mu),
            ObservationModel::Bernoulli { p0, p1 } => {
                if x.0 == 1.0 {
                    Ok((p1 / p0).ln())
                } else if x.0 == 0.0 {
                    Ok(((1.0 - p1) / (1.0 - p0)).ln())
                } else {
                    Err(ModelError::OutOfSupport(x.0))
                }
            }
        }
    }

    pub fn kl_numbers(&self) -> KlNumbers {
        match *self {
            ObservationModel::GaussianMeanShift { mu } => {
                let kl = 0.5 * mu * mu;
                KlNumbers { i0: kl, i1: kl }
            }
            ObservationModel::Bernoulli { p0, p1 } => KlNumbers {
                i0: bernoulli_kl(p0, p1),
                i1: bernoulli_kl(p1, p0),
            },
        }
    }

    /// `E_1[(log f1(X)/f0(X))^2]`.
    pub fn llr_second_moment(&self) -> f64 {
        match *self {
            // LLR is mu*X - mu^2/2 with X ~ N(mu, 1): mean mu^2/2, variance mu^2.
            ObservationModel::GaussianMeanShift { mu } => {
                let mean = 0.5 * mu * mu;
                mu * mu + mean * mean
            }
            ObservationModel::Bernoulli { p0, p1 } => {
                let up = (p1 / p0).ln();
                let down = ((1.0 - p1) / (1.0 - p0)).ln();
                p1 * up * up + (1.0 - p1) * down * down
            }
        }
    }
}

/// KL(Bern(p) || Bern(q)).
fn bernoulli_kl(p: f64, q: f64) -> f64 {
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}
