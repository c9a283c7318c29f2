//! Closed-form results for the M|M|1|N energy queue.
//!
//! A node's energy storage is a finite queue of energy packets: packets arrive
//! as a Poisson process of rate `mu` and are consumed by event reports arriving
//! at rate `theta`. A report that finds the queue empty is lost. With
//! `alpha = mu / theta` the empty-state probability is
//!
//! ```text
//! p(alpha, n) = (1 - alpha) / (1 - alpha^(n+1))
//! ```
//!
//! Everything here is written in terms of `eps = ln(alpha)` and `expm1` so the
//! removable singularity at `alpha = 1` and the huge exponents that appear for
//! realistic capacities (thousands of packets) never produce `0/0` or `inf/inf`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    #[error("queue ratio must be finite and non-negative, got {0}")]
    NegativeRatio(f64),
    #[error("capacity must be finite and at least 1, got {0}")]
    CapacityTooSmall(f64),
}

/// Ratio `mu / theta` of energy-packet arrival rate to consumption rate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QueueRatio(f64);

impl QueueRatio {
    pub fn new(alpha: f64) -> Result<Self, QueueError> {
        if alpha.is_finite() && alpha >= 0.0 {
            Ok(Self(alpha))
        } else {
            Err(QueueError::NegativeRatio(alpha))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Storage capacity in energy packets. Real-valued; the simulator rounds it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Capacity(f64);

impl Capacity {
    pub fn new(n: f64) -> Result<Self, QueueError> {
        if n.is_finite() && n >= 1.0 {
            Ok(Self(n))
        } else {
            Err(QueueError::CapacityTooSmall(n))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Probability that the energy queue is empty, i.e. that an arriving report
/// is dropped for lack of energy.
pub fn blocking_probability(alpha: QueueRatio, n: Capacity) -> f64 {
    let (alpha, n) = (alpha.0, n.0);
    if alpha == 0.0 {
        return 1.0;
    }
    let m = n + 1.0;
    let eps = log_ratio(alpha);
    if eps == 0.0 {
        return 1.0 / m;
    }
    if eps < 0.0 {
        // Both factors are in (-1, 0); no overflow possible.
        (eps.exp_m1() / (m * eps).exp_m1()).clamp(0.0, 1.0)
    } else {
        // (alpha - 1) alpha^-m / (1 - alpha^-m), assembled in log space.
        let log_p = eps.exp_m1().ln() - m * eps - (-(-m * eps).exp_m1()).ln();
        log_p.exp().clamp(0.0, 1.0)
    }
}

/// `(alpha - alpha^(n+1)) / (1 - alpha^(n+1))`, which equals `1 - p(alpha, n)`.
///
/// Computed directly rather than as `1 - p` so that it keeps full relative
/// precision when `alpha` is small.
pub fn effective_throughput_factor(alpha: QueueRatio, n: Capacity) -> f64 {
    let (alpha, n) = (alpha.0, n.0);
    if alpha == 0.0 {
        return 0.0;
    }
    let eps = log_ratio(alpha);
    if eps == 0.0 {
        return n / (n + 1.0);
    }
    if eps < 0.0 {
        (alpha * (n * eps).exp_m1() / ((n + 1.0) * eps).exp_m1()).clamp(0.0, 1.0)
    } else {
        // (1 - alpha^-n) / (1 - alpha^-(n+1))
        ((-n * eps).exp_m1() / (-(n + 1.0) * eps).exp_m1()).clamp(0.0, 1.0)
    }
}

/// `ln(alpha)`, accurate when `alpha` is close to one.
fn log_ratio(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 0.5 {
        (alpha - 1.0).ln_1p()
    } else {
        alpha.ln()
    }
}

/// Convenience wrapper validating raw floats.
pub fn try_blocking_probability(alpha: f64, n: f64) -> Result<f64, QueueError> {
    Ok(blocking_probability(
        QueueRatio::new(alpha)?,
        Capacity::new(n)?,
    ))
}

/// Convenience wrapper validating raw floats.
pub fn try_effective_throughput_factor(alpha: f64, n: f64) -> Result<f64, QueueError> {
    Ok(effective_throughput_factor(
        QueueRatio::new(alpha)?,
        Capacity::new(n)?,
    ))
}
