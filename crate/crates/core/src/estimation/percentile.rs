use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::LogNormalParams;
use crate::error::{Error, Result};
use crate::normal;

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::param("p", p, "must lie strictly between 0 and 1"))
    }
}

/// Hazen percentile of sorted values.
///
/// Plotting positions are `(i - 0.5) / n`; between them the estimate is
/// interpolated linearly and beyond the extremes it is clamped.
pub fn hazen_percentile(sorted: &[f64], p: f64) -> Result<f64> {
    check_level(p)?;
    let n = sorted.len();
    if n == 0 {
        return Err(Error::EmptyInput("percentile of no values"));
    }
    let rank = p * n as f64 + 0.5;
    if rank <= 1.0 {
        return Ok(sorted[0]);
    }
    if rank >= n as f64 {
        return Ok(sorted[n - 1]);
    }
    let lo = rank.floor();
    let frac = rank - lo;
    let i = lo as usize - 1;
    Ok(sorted[i] + frac * (sorted[i + 1] - sorted[i]))
}

/// Correction factor making `x̄ + α·s·z_p` unbiased for `μ + z_p·σ`.
///
/// `α = √((n-1)/2) · Γ((n-1)/2) / Γ(n/2)`, i.e. `σ / E[s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallSampleFactors {
    pub n: usize,
    pub alpha: f64,
}

impl SmallSampleFactors {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", n as f64, "needs at least two samples"));
        }
        let k = (n - 1) as f64 / 2.0;
        let alpha = k.sqrt() * (ln_gamma(k) - ln_gamma(n as f64 / 2.0)).exp();
        Ok(SmallSampleFactors { n, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PercentileEstimate {
    pub p: f64,
    pub log_value: f64,
    /// Count per 100 mL.
    pub value: f64,
    /// Asymptotic standard error of `log_value`, `d_p·σ/√n`.
    pub se_log: f64,
}

/// Percentile of the fitted lognormal, `exp(μ + z_p σ)`.
///
/// With `unbiased` the spread is scaled by the small-sample factor α.
pub fn parametric_percentile(
    params: &LogNormalParams,
    p: f64,
    unbiased: bool,
) -> Result<PercentileEstimate> {
    check_level(p)?;
    let z = normal::quantile(p);
    let spread = if unbiased && z != 0.0 {
        SmallSampleFactors::new(params.n)?.alpha * params.sigma
    } else {
        params.sigma
    };
    let log_value = params.mu + z * spread;
    let d = (1.0 + 0.5 * z * z).sqrt();
    Ok(PercentileEstimate {
        p,
        log_value,
        value: log_value.exp(),
        se_log: d * params.sigma / (params.n as f64).sqrt(),
    })
}

/// Large-sample standard error coefficients of the `p`-th percentile of
/// normal data, in units of `σ/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingCoefficients {
    pub p: f64,
    /// Empirical percentile: `√(p(1-p)) / φ(z_p)`.
    pub c: f64,
    /// Parametric `μ̂ + z_p σ̂`: `√(1 + z_p²/2)`.
    pub d: f64,
    /// How many times more samples the empirical percentile needs: `(c/d)²`.
    pub factor: f64,
}

pub fn sampling_coefficients(p: f64) -> Result<SamplingCoefficients> {
    check_level(p)?;
    let z = normal::quantile(p);
    let c = (p * (1.0 - p)).sqrt() / normal::pdf(z);
    let d = (1.0 + 0.5 * z * z).sqrt();
    Ok(SamplingCoefficients {
        p,
        c,
        d,
        factor: (c / d).powi(2),
    })
}
