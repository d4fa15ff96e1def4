//! Threshold calibration.
//!
//! The null-acceptance threshold is `A = |log beta|`. The alternative
//! threshold `B` solves `F(B) = alpha`, where `F` is the survival function of
//! an Erlang(1, K) variable: under the null, each sensor's running maximum
//! LLR is dominated by a unit exponential, so the sum of `K` of them is
//! dominated by an Erlang(1, K).

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("erlang survival requires x >= 0, got {0}")]
    NegativeArgument(f64),
    #[error("number of sensors must be at least 1")]
    ZeroSensors,
    #[error("{name} must lie strictly inside (0, 1), got {value}")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
}

/// The calibrated pair `(A, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Null-acceptance threshold: stop for H0 once the statistic is `<= -a`.
    pub a: f64,
    /// Alternative-acceptance threshold: stop for H1 once the statistic is `>= b`.
    pub b: f64,
}

impl Thresholds {
    /// Builds thresholds directly, bypassing calibration. Both values must be
    /// positive and finite.
    pub fn new(a: f64, b: f64) -> Option<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        (ok(a) && ok(b)).then_some(Thresholds { a, b })
    }
}

/// Absolute bisection tolerance on the threshold.
const BISECTION_TOL: f64 = 1e-12;

/// `F(x) = e^{-x} sum_{j<k} x^j / j!`, evaluated in the log domain.
pub fn erlang_survival(x: f64, k: u32) -> Result<f64, CalibrationError> {
    Ok(log_erlang_survival(x, k)?.exp())
}

/// Natural log of [`erlang_survival`].
pub fn log_erlang_survival(x: f64, k: u32) -> Result<f64, CalibrationError> {
    if k == 0 {
        return Err(CalibrationError::ZeroSensors);
    }
    if x.is_nan() || x < 0.0 {
        return Err(CalibrationError::NegativeArgument(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let log_x = x.ln();
    // Running log-sum-exp over log(x^j / j!), j = 0..k-1.
    let mut log_term = 0.0f64;
    let mut max = 0.0f64;
    let mut scaled_sum = 1.0f64;
    for j in 1..k {
        log_term += log_x - f64::from(j).ln();
        if log_term > max {
            scaled_sum = scaled_sum * (max - log_term).exp() + 1.0;
            max = log_term;
        } else {
            scaled_sum += (log_term - max).exp();
        }
    }
    // Rounding can push the result a hair above 0 when F is within an ulp of 1.
    Ok((-x + max + scaled_sum.ln()).min(0.0))
}

/// Solves `F(b) = alpha` for `b`.
///
/// The bracket starts at `[0, max(1, |log alpha|)]` and doubles its upper end
/// until `F(hi) <= alpha`; bisection then narrows it to `BISECTION_TOL`.
pub fn invert_erlang_survival(alpha: f64, k: u32) -> Result<f64, CalibrationError> {
    check_probability("alpha", alpha)?;
    if k == 0 {
        return Err(CalibrationError::ZeroSensors);
    }
    let log_alpha = alpha.ln();
    let mut lo = 0.0f64;
    let mut hi = log_alpha.abs().max(1.0);
    while log_erlang_survival(hi, k)? > log_alpha {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_erlang_survival(mid, k)? > log_alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Return whichever end lands closer to alpha.
    let err = |x: f64| log_erlang_survival(x, k).map(|l| (l - log_alpha).abs());
    Ok(if err(lo)? < err(hi)? { lo } else { hi })
}

/// `A = |log beta|`, `B = F^{-1}(alpha)` for `k` sensors.
pub fn calibrate(alpha: f64, beta: f64, k: u32) -> Result<Thresholds, CalibrationError> {
    check_probability("beta", beta)?;
    let b = invert_erlang_survival(alpha, k)?;
    Ok(Thresholds {
        a: beta.ln().abs(),
        b,
    })
}

fn check_probability(name: &'static str, value: f64) -> Result<(), CalibrationError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(CalibrationError::ProbabilityOutOfRange { name, value })
    }
}
