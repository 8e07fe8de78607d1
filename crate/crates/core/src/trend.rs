//! Log-linear trends: `log X(t) ~ N(μ₀ + m·t, σ)` with `t` in years.
//!
//! A slope of `m = -0.05` is roughly a 5% reduction in counts per year.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::criteria::{Category, Criteria};
use crate::error::{Error, Result};
use crate::estimation::impute::{self, Model};
use crate::estimation::{prepare, CensorPolicy, FitOptions, Sample};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Projections further than this beyond the data are flagged.
pub const MAX_EXTRAPOLATION_YEARS: f64 = 2.0;

/// Stand-in for an infinite z-score in reports.
pub const Z_SENTINEL: f64 = 1e6;

pub fn years_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// Per year, on natural-log counts.
    pub slope: f64,
    /// Log count at `origin`.
    pub intercept: f64,
    /// Residual SD with the n−2 divisor.
    pub sigma_res: f64,
    pub se_slope: f64,
    pub n: usize,
    pub censored: usize,
    pub origin: NaiveDate,
    pub last: NaiveDate,
    pub span_years: f64,
    /// Mean sample time in years from `origin`.
    pub time_mean: f64,
    /// Sum of squared time deviations, years².
    pub time_ss: f64,
    /// Residual SD of the later half over the earlier half.
    pub residual_sd_ratio: Option<f64>,
    pub iterations: usize,
}

impl TrendFit {
    /// `m / se_m`, capped at [`Z_SENTINEL`] for noiseless data.
    pub fn z(&self) -> f64 {
        z_score(self.slope, self.se_slope)
    }

    pub fn mean_at(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    pub fn se_mean_at(&self, t: f64) -> f64 {
        self.sigma_res * (1.0 / self.n as f64 + (t - self.time_mean).powi(2) / self.time_ss).sqrt()
    }
}

pub fn z_score(slope: f64, se: f64) -> f64 {
    if se > 0.0 {
        (slope / se).clamp(-Z_SENTINEL, Z_SENTINEL)
    } else if slope == 0.0 {
        0.0
    } else {
        Z_SENTINEL.copysign(slope)
    }
}

struct Line<'a> {
    intercept: f64,
    slope: f64,
    sigma: f64,
    times: &'a [f64],
}

impl Model for Line<'_> {
    fn params(&self) -> Vec<f64> {
        vec![self.intercept, self.slope, self.sigma]
    }
    fn location(&self, pos: usize) -> f64 {
        self.intercept + self.slope * self.times[pos]
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
}

struct Ols {
    intercept: f64,
    slope: f64,
    sigma: f64,
    time_mean: f64,
    time_ss: f64,
}

fn ols(times: &[f64], values: &[f64]) -> Result<Ols> {
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let vm = values.iter().sum::<f64>() / n;
    let (mut stt, mut stv) = (0.0, 0.0);
    for (t, v) in times.iter().zip(values) {
        stt += (t - tm) * (t - tm);
        stv += (t - tm) * (v - vm);
    }
    if stt.is_nan() || stt <= 0.0 {
        return Err(Error::DegenerateTimeSpan);
    }
    let slope = stv / stt;
    let intercept = vm - slope * tm;
    let ssr: f64 = times
        .iter()
        .zip(values)
        .map(|(t, v)| (v - intercept - slope * t).powi(2))
        .sum();
    Ok(Ols {
        intercept,
        slope,
        sigma: (ssr / (n - 2.0)).sqrt(),
        time_mean: tm,
        time_ss: stt,
    })
}

/// Ratio of the residual SDs of the later and earlier halves (by time).
fn half_ratio(times: &[f64], residuals: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let half = order.len() / 2;
    let sd = |idx: &[usize]| {
        let k = idx.len() as f64;
        let m = idx.iter().map(|&i| residuals[i]).sum::<f64>() / k;
        (idx.iter().map(|&i| (residuals[i] - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    };
    if half < 2 {
        return None;
    }
    let (early, late) = (sd(&order[..half]), sd(&order[half..]));
    (early > 0.0).then(|| late / early)
}

/// Ordinary least squares of log counts on time in years from the first sample.
///
/// Under [`CensorPolicy::Impute`] censored values are conditioned on the
/// current fitted line and the regression is iterated to a joint fixed point.
pub fn fit_trend(samples: &[Sample], policy: CensorPolicy, opts: &FitOptions) -> Result<TrendFit> {
    if samples.len() < 3 {
        return Err(Error::TooFewExact {
            required: 3,
            found: samples.iter().filter(|s| !s.reading.is_censored()).count(),
        });
    }
    let mut prep = prepare(samples, policy, opts, 3)?;
    let origin = samples.iter().map(|s| s.date).min().expect("nonempty");
    let last = samples.iter().map(|s| s.date).max().expect("nonempty");
    let times: Vec<f64> = prep
        .origin
        .iter()
        .map(|&i| years_between(origin, samples[i].date))
        .collect();

    let (line, iterations) = impute::iterate(&mut prep.values, &prep.censored, opts, |v| {
        let fit = ols(&times, v)?;
        Ok(Line {
            intercept: fit.intercept,
            slope: fit.slope,
            sigma: fit.sigma,
            times: &times,
        })
    })?;
    let (intercept, slope) = (line.intercept, line.slope);
    let fit = ols(&times, &prep.values)?;
    let residuals: Vec<f64> = times
        .iter()
        .zip(&prep.values)
        .map(|(t, v)| v - intercept - slope * t)
        .collect();

    Ok(TrendFit {
        slope,
        intercept,
        sigma_res: fit.sigma,
        se_slope: fit.sigma / fit.time_ss.sqrt(),
        n: prep.values.len(),
        censored: prep.censored_total,
        origin,
        last,
        span_years: years_between(origin, last),
        time_mean: fit.time_mean,
        time_ss: fit.time_ss,
        residual_sd_ratio: half_ratio(&times, &residuals),
        iterations,
    })
}

/// State `(μ₀ + m·t, σ_res)` projected to a date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateAtTime {
    pub date: NaiveDate,
    pub mu: f64,
    pub sigma: f64,
    pub se_mu: f64,
    pub se_sigma: f64,
    pub category: Category,
    /// Years outside the sampled period.
    pub extrapolation_years: f64,
    pub extrapolated: bool,
}

pub fn state_at(fit: &TrendFit, date: NaiveDate, criteria: &Criteria) -> Result<StateAtTime> {
    let t = years_between(fit.origin, date);
    let mu = fit.mean_at(t);
    let outside = (t - fit.span_years).max(-t).max(0.0);
    Ok(StateAtTime {
        date,
        mu,
        sigma: fit.sigma_res,
        se_mu: fit.se_mean_at(t),
        se_sigma: fit.sigma_res / (2.0 * (fit.n as f64 - 2.0)).sqrt(),
        category: criteria.classify_parametric(mu, fit.sigma_res)?,
        extrapolation_years: outside,
        extrapolated: outside > MAX_EXTRAPOLATION_YEARS,
    })
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::param(name, v, "must be positive"))
    }
}

/// Expected slope standard error for `per_year` evenly spaced samples over `years`:
/// `√12 · σ · T^(-3/2) · n^(-1/2)`.
pub fn trend_se(sigma: f64, years: f64, per_year: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    positive("years", years)?;
    positive("per_year", per_year)?;
    Ok(12f64.sqrt() * sigma * years.powf(-1.5) / per_year.sqrt())
}

/// Samples per year needed for the expected slope SE to fall below `|m|`.
pub fn required_samples(sigma: f64, years: f64, trend: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::param("sigma", sigma, "must be non-negative"));
    }
    positive("years", years)?;
    if !(trend.is_finite() && trend != 0.0) {
        return Err(Error::param("trend", trend, "must be nonzero"));
    }
    Ok(12.0 * sigma * sigma / (years.powi(3) * trend * trend))
}

/// Power relation between σ, T, n and the detectable trend; one field left open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub sigma: Option<f64>,
    pub years: Option<f64>,
    pub per_year: Option<f64>,
    pub trend: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUnknown {
    Sigma,
    Years,
    PerYear,
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSolution {
    pub sigma: f64,
    pub years: f64,
    pub per_year: f64,
    /// Smallest detectable |m|.
    pub trend: f64,
    pub solved: PowerUnknown,
}

impl PowerQuery {
    pub fn solve(&self) -> Result<PowerSolution> {
        let given = [self.sigma, self.years, self.per_year, self.trend]
            .iter()
            .filter(|v| v.is_some())
            .count();
        if given != 3 {
            return Err(Error::InvalidScenario(format!(
                "power analysis needs exactly three of sigma, years, per_year, trend; got {given}"
            )));
        }
        let twelve = 12.0;
        let sol = match (self.sigma, self.years, self.per_year, self.trend) {
            (Some(s), Some(t), Some(n), None) => PowerSolution {
                sigma: s,
                years: t,
                per_year: n,
                trend: trend_se(s, t, n)?,
                solved: PowerUnknown::Trend,
            },
            (Some(s), Some(t), None, Some(m)) => PowerSolution {
                sigma: s,
                years: t,
                per_year: required_samples(s, t, m)?,
                trend: m.abs(),
                solved: PowerUnknown::PerYear,
            },
            (Some(s), None, Some(n), Some(m)) => {
                positive("sigma", s)?;
                positive("per_year", n)?;
                let m = positive("trend", m.abs())?;
                PowerSolution {
                    sigma: s,
                    years: (twelve * s * s / (n * m * m)).cbrt(),
                    per_year: n,
                    trend: m,
                    solved: PowerUnknown::Years,
                }
            }
            (None, Some(t), Some(n), Some(m)) => {
                positive("years", t)?;
                positive("per_year", n)?;
                let m = positive("trend", m.abs())?;
                PowerSolution {
                    sigma: m * t.powf(1.5) * n.sqrt() / twelve.sqrt(),
                    years: t,
                    per_year: n,
                    trend: m,
                    solved: PowerUnknown::Sigma,
                }
            }
            _ => unreachable!("exactly three fields are set"),
        };
        Ok(sol)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TierCounts {
    /// Sites with `z ≤ -1, -2, -3`.
    pub improving: [usize; 3],
    /// Sites with `z ≥ 1, 2, 3`.
    pub deteriorating: [usize; 3],
    pub not_significant: usize,
    pub total: usize,
}

impl TierCounts {
    pub fn not_significant_fraction(&self) -> f64 {
        self.not_significant as f64 / self.total as f64
    }

    /// Binomial standard error of [`TierCounts::not_significant_fraction`].
    pub fn not_significant_se(&self) -> f64 {
        let f = self.not_significant_fraction();
        (f * (1.0 - f) / self.total as f64).sqrt()
    }
}

pub fn significance_tiers(fits: &[TrendFit]) -> Result<TierCounts> {
    if fits.is_empty() {
        return Err(Error::EmptyInput("no trend fits"));
    }
    let mut counts = TierCounts {
        total: fits.len(),
        ..TierCounts::default()
    };
    for f in fits {
        let z = f.z();
        if z.abs() < 1.0 {
            counts.not_significant += 1;
            continue;
        }
        let bucket = if z < 0.0 {
            &mut counts.improving
        } else {
            &mut counts.deteriorating
        };
        for (k, slot) in bucket.iter_mut().enumerate() {
            if z.abs() >= (k + 1) as f64 {
                *slot += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendPopulation {
    pub sites: usize,
    pub mean_slope: f64,
    /// Sample variance of the fitted slopes.
    pub observed_variance: f64,
    pub mean_se_squared: f64,
    pub median_se: f64,
    /// `max(0, observed − mean se²)`.
    pub true_variance: f64,
}

impl TrendPopulation {
    pub fn true_sd(&self) -> f64 {
        self.true_variance.sqrt()
    }
}

/// Variance left after removing sampling noise of size `se` from an observed spread.
pub fn deconvolved_variance(observed_sd: f64, se: f64) -> f64 {
    (observed_sd * observed_sd - se * se).max(0.0)
}

pub fn deconvolve_trends(fits: &[TrendFit]) -> Result<TrendPopulation> {
    if fits.len() < 2 {
        return Err(Error::EmptyInput("deconvolution needs at least two fits"));
    }
    let k = fits.len() as f64;
    let mean = fits.iter().map(|f| f.slope).sum::<f64>() / k;
    let var = fits.iter().map(|f| (f.slope - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let mean_se2 = fits.iter().map(|f| f.se_slope * f.se_slope).sum::<f64>() / k;
    let mut ses: Vec<f64> = fits.iter().map(|f| f.se_slope).collect();
    ses.sort_by(f64::total_cmp);
    let mid = ses.len() / 2;
    let median_se = if ses.len() % 2 == 1 {
        ses[mid]
    } else {
        0.5 * (ses[mid - 1] + ses[mid])
    };
    Ok(TrendPopulation {
        sites: fits.len(),
        mean_slope: mean,
        observed_variance: var,
        mean_se_squared: mean_se2,
        median_se,
        true_variance: (var - mean_se2).max(0.0),
    })
}
