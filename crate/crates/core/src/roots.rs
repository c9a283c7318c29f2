//! Bisection for monotonically increasing functions.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub root: f64,
    /// `f(root)`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    /// Stop once `|f(x)|` is at most this.
    pub value_tolerance: f64,
    /// Stop once the bracket is at most this wide.
    pub width_tolerance: f64,
    pub max_iterations: usize,
}

/// Finds `x` in `[lo, hi]` with `f(x) ~ 0`, assuming `f` is increasing with
/// `f(lo) <= 0 <= f(hi)`. Returns the best point seen if a limit is hit first.
pub fn bisect_increasing<F>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    config: &BisectionConfig,
) -> Result<Bisection, RootError>
where
    F: Fn(f64) -> f64,
{
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return Err(RootError::NotBracketed { lo, hi, f_lo, f_hi });
    }
    let mut best = if f_lo.abs() <= f_hi.abs() {
        Bisection {
            root: lo,
            residual: f_lo,
            iterations: 0,
        }
    } else {
        Bisection {
            root: hi,
            residual: f_hi,
            iterations: 0,
        }
    };
    for iteration in 1..=config.max_iterations {
        if best.residual.abs() <= config.value_tolerance || hi - lo <= config.width_tolerance {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        let f_mid = f(mid);
        if f_mid.abs() < best.residual.abs() {
            best = Bisection {
                root: mid,
                residual: f_mid,
                iterations: iteration,
            };
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        best.iterations = iteration;
    }
    Ok(best)
}
