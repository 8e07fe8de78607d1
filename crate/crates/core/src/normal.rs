//! Standard normal helpers shared by the estimators and the classifier.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::f64::consts::SQRT_2;

pub fn pdf(x: f64) -> f64 {
    Normal::standard().pdf(x)
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail probability `1 - Φ(x)`, accurate for large `x`.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse of the standard normal CDF.
pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `φ(a) / (1 - Φ(a))`: the mean of a standard normal truncated to `(a, ∞)`.
pub fn upper_tail_mean(a: f64) -> f64 {
    let tail = sf(a);
    if tail > 1e-300 {
        pdf(a) / tail
    } else {
        // asymptotic inverse Mills ratio
        a + 1.0 / a - 2.0 / a.powi(3)
    }
}

/// `-φ(a) / Φ(a)`: the mean of a standard normal truncated to `(-∞, a)`.
pub fn lower_tail_mean(a: f64) -> f64 {
    -upper_tail_mean(-a)
}
