//! Monte Carlo experiments comparing percentile and parametric estimation.
//!
//! Replication `r` draws from its own ChaCha stream `(seed, r)`, and results
//! are reduced in replication order, so reports are bit-identical for a
//! given seed whatever the number of worker threads.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{Category, Criteria};
use crate::error::{Error, Result};
use crate::estimation::{
    empirical_stats, fit_lognormal, hazen_percentile, CensorPolicy, FitOptions, LogNormalParams,
    Reading, Sample, SmallSampleFactors,
};
use crate::normal;
use crate::trend::{self, fit_trend};

pub const DEFAULT_REPLICATIONS: usize = 100_000;

/// True state of the simulated site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truth {
    Params { mu: f64, sigma: f64 },
    Percentiles { median: f64, p95: f64 },
}

impl Truth {
    /// `(μ, σ)` of the log counts.
    pub fn mu_sigma(&self) -> (f64, f64) {
        match *self {
            Truth::Params { mu, sigma } => (mu, sigma),
            Truth::Percentiles { median, p95 } => (
                median.ln(),
                (p95.ln() - median.ln()) / normal::quantile(0.95),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(flatten)]
    pub truth: Truth,
    /// Slope per year of the log counts.
    #[serde(default)]
    pub trend: f64,
    pub samples_per_year: f64,
    pub years: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    /// Values above this count are reported as `>censor_above`.
    #[serde(default)]
    pub censor_above: Option<f64>,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

impl ScenarioSpec {
    pub fn samples(&self) -> usize {
        (self.samples_per_year * self.years).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (mu, sigma) = self.truth.mu_sigma();
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        if !mu.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
            return bad("true (mu, sigma) must be finite with sigma >= 0");
        }
        if let Truth::Percentiles { median, p95 } = self.truth {
            if !(median > 0.0 && p95 >= median) {
                return bad("need 0 < median <= p95");
            }
        }
        if !(self.samples_per_year > 0.0 && self.years > 0.0) {
            return bad("samples_per_year and years must be positive");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if !self.trend.is_finite() {
            return bad("trend must be finite");
        }
        if matches!(self.censor_above, Some(b) if b.is_nan() || b <= 0.0) {
            return bad("censor_above must be positive");
        }
        Ok(())
    }
}

pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Equally spaced lognormal readings starting at `start`.
///
/// Reading `i` is taken `i / per_year` years after `start` (rounded to a day)
/// with log count `mu + trend·t + sigma·Z`.
#[allow(clippy::too_many_arguments)]
pub fn lognormal_series<R: Rng + ?Sized>(
    rng: &mut R,
    start: NaiveDate,
    mu: f64,
    sigma: f64,
    trend: f64,
    per_year: f64,
    count: usize,
    censor_above: Option<f64>,
) -> Vec<Sample> {
    (0..count)
        .map(|i| {
            let days = (i as f64 * trend::DAYS_PER_YEAR / per_year).round() as i64;
            let date = start + chrono::Duration::days(days);
            let t = trend::years_between(start, date);
            let z: f64 = rng.sample(StandardNormal);
            let v = (mu + trend * t + sigma * z).exp();
            let reading = match censor_above {
                Some(b) if v > b => Reading::Above(b),
                _ => Reading::Exact(v),
            };
            Sample::new(date, reading)
        })
        .collect()
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

/// A Monte Carlo proportion and its standard error `√(r(1−r)/R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub rate: f64,
    pub mc_se: f64,
}

impl Rate {
    pub fn from_counts(hits: usize, total: usize) -> Self {
        let r = hits as f64 / total as f64;
        Rate {
            rate: r,
            mc_se: (r * (1.0 - r) / total as f64).sqrt(),
        }
    }

    fn zero() -> Self {
        Rate {
            rate: 0.0,
            mc_se: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub mean: f64,
    pub sd: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
}

impl EstimateSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .map(|&p| {
                (
                    p,
                    hazen_percentile(&sorted, p).expect("nonempty, valid level"),
                )
            })
            .collect();
        EstimateSummary {
            mean,
            sd,
            quantiles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    /// Estimated 95th percentile in counts.
    pub p95: EstimateSummary,
    /// Estimated 95th percentile of the log counts.
    pub log_p95: EstimateSummary,
    /// Fraction of replications with estimate `≤ threshold`.
    pub pass: Rate,
    /// True P95 above the threshold but estimate at or below it.
    pub false_pass: Rate,
    /// True P95 at or below the threshold but estimate above it.
    pub false_fail: Rate,
    pub misclassified: Rate,
    /// Counts by (true category, estimated category).
    pub confusion: [[usize; 5]; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub percentile_density: f64,
    pub parametric_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub scenario: ScenarioSpec,
    pub threshold: f64,
    pub unbiased: bool,
    pub samples: usize,
    pub true_mu: f64,
    pub true_sigma: f64,
    pub true_p95: f64,
    pub true_category: Category,
    pub percentile: MethodReport,
    pub parametric: MethodReport,
    /// Densities of the P95 estimates over log-spaced bins.
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StateOptions {
    /// Use the small-sample unbiased parametric percentile.
    pub unbiased: bool,
    pub histogram_bins: usize,
}

struct StateOutcome {
    pct_log_p95: f64,
    par_log_p95: f64,
    pct_category: Category,
    par_category: Category,
}

fn method_report(
    log_p95: &[f64],
    categories: &[Category],
    threshold: f64,
    true_p95: f64,
    true_category: Category,
) -> MethodReport {
    let total = log_p95.len();
    let passes = log_p95.iter().filter(|&&l| l <= threshold.ln()).count();
    let pass = Rate::from_counts(passes, total);
    let truly_passes = true_p95 <= threshold;
    let mut confusion = [[0usize; 5]; 5];
    for c in categories {
        confusion[true_category.index()][c.index()] += 1;
    }
    let wrong = categories.iter().filter(|&&c| c != true_category).count();
    let counts: Vec<f64> = log_p95.iter().map(|l| l.exp()).collect();
    MethodReport {
        p95: EstimateSummary::from_values(&counts),
        log_p95: EstimateSummary::from_values(log_p95),
        pass,
        false_pass: if truly_passes { Rate::zero() } else { pass },
        false_fail: if truly_passes {
            Rate::from_counts(total - passes, total)
        } else {
            Rate::zero()
        },
        misclassified: Rate::from_counts(wrong, total),
        confusion,
    }
}

fn histogram(pct: &[f64], par: &[f64], bins: usize) -> Vec<HistogramBin> {
    if bins == 0 {
        return Vec::new();
    }
    let lo = pct.iter().chain(par).copied().fold(f64::INFINITY, f64::min);
    let hi = pct
        .iter()
        .chain(par)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let count = |values: &[f64]| {
        let mut c = vec![0usize; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            c[i] += 1;
        }
        c
    };
    let (cp, cq) = (count(pct), count(par));
    (0..bins)
        .map(|i| {
            let (a, b) = (
                (lo + i as f64 * width).exp(),
                (lo + (i + 1) as f64 * width).exp(),
            );
            HistogramBin {
                lower: a,
                upper: b,
                percentile_density: cp[i] as f64 / (pct.len() as f64 * (b - a)),
                parametric_density: cq[i] as f64 / (par.len() as f64 * (b - a)),
            }
        })
        .collect()
}

/// Repeatedly samples a stationary site and estimates its P95 and category
/// by both methods.
///
/// The percentile method uses Hazen percentiles of the log counts with
/// censored readings at their bound; the parametric method fits `(μ, σ)`
/// with imputation.
pub fn run_state_experiment(
    spec: &ScenarioSpec,
    threshold: f64,
    criteria: &Criteria,
    opts: &StateOptions,
) -> Result<StateReport> {
    spec.validate()?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::param("threshold", threshold, "must be positive"));
    }
    if spec.trend != 0.0 {
        return Err(Error::InvalidScenario(
            "state experiments need trend = 0".into(),
        ));
    }
    let (mu, sigma) = spec.truth.mu_sigma();
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidScenario(
            "state experiments need sigma > 0".into(),
        ));
    }
    let n = spec.samples();
    if n < 2 {
        return Err(Error::InvalidScenario(
            "need at least two samples per replication".into(),
        ));
    }
    let z95 = normal::quantile(0.95);
    let alpha = if opts.unbiased {
        SmallSampleFactors::new(n)?.alpha
    } else {
        1.0
    };
    let fit_opts = FitOptions::default();

    let outcomes: Vec<StateOutcome> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(spec.seed, rep as u64);
            let samples = lognormal_series(
                &mut rng,
                epoch(),
                mu,
                sigma,
                0.0,
                spec.samples_per_year,
                n,
                spec.censor_above,
            );
            let stats = empirical_stats(&samples, CensorPolicy::Clamp, &fit_opts)?;
            let params = fit_lognormal(&samples, CensorPolicy::Impute, &fit_opts)?.params;
            Ok(StateOutcome {
                pct_log_p95: stats.p95.ln(),
                par_log_p95: params.mu + alpha * z95 * params.sigma,
                pct_category: criteria.classify_percentile(&stats, false),
                par_category: criteria.classify_parametric(params.mu, params.sigma)?,
            })
        })
        .collect::<Result<_>>()?;

    let true_p95 = (mu + z95 * sigma).exp();
    let true_category = criteria.classify_parametric(mu, sigma)?;
    let pct: Vec<f64> = outcomes.iter().map(|o| o.pct_log_p95).collect();
    let par: Vec<f64> = outcomes.iter().map(|o| o.par_log_p95).collect();
    let pct_cat: Vec<Category> = outcomes.iter().map(|o| o.pct_category).collect();
    let par_cat: Vec<Category> = outcomes.iter().map(|o| o.par_category).collect();

    Ok(StateReport {
        scenario: spec.clone(),
        threshold,
        unbiased: opts.unbiased,
        samples: n,
        true_mu: mu,
        true_sigma: sigma,
        true_p95,
        true_category,
        percentile: method_report(&pct, &pct_cat, threshold, true_p95, true_category),
        parametric: method_report(&par, &par_cat, threshold, true_p95, true_category),
        histogram: histogram(&pct, &par, opts.histogram_bins),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub scenario: ScenarioSpec,
    pub samples: usize,
    /// `√12 σ T^(-3/2) n^(-1/2)`.
    pub expected_se: f64,
    pub slope: EstimateSummary,
    /// Mean of the per-replication OLS slope standard errors.
    pub mean_fitted_se: f64,
    /// Fitted `m/se ≤ -1`.
    pub improving: Rate,
    /// Fitted `m/se ≥ 1`.
    pub deteriorating: Rate,
    /// `|m/se| ≥ 1`.
    pub detected: Rate,
    /// Fitted slope has the sign of the true trend; absent when the trend is zero.
    pub sign_correct: Option<Rate>,
    /// Slopes within `1e-9` of the true trend.
    pub exact: Rate,
}

/// Fits trends to equally spaced replications and summarizes the slopes.
pub fn run_trend_experiment(spec: &ScenarioSpec) -> Result<TrendReport> {
    spec.validate()?;
    let (mu, sigma) = spec.truth.mu_sigma();
    let n = spec.samples();
    if n < 3 {
        return Err(Error::InvalidScenario(
            "trend experiments need at least three samples".into(),
        ));
    }
    let fit_opts = FitOptions::default();
    let fits: Vec<(f64, f64)> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(spec.seed, rep as u64);
            let samples = lognormal_series(
                &mut rng,
                epoch(),
                mu,
                sigma,
                spec.trend,
                spec.samples_per_year,
                n,
                spec.censor_above,
            );
            let fit = fit_trend(&samples, CensorPolicy::Impute, &fit_opts)?;
            Ok((fit.slope, fit.se_slope))
        })
        .collect::<Result<_>>()?;

    let total = fits.len();
    let slopes: Vec<f64> = fits.iter().map(|f| f.0).collect();
    let z: Vec<f64> = fits.iter().map(|&(m, se)| trend::z_score(m, se)).collect();
    let count = |pred: &dyn Fn(usize) -> bool| (0..total).filter(|&i| pred(i)).count();
    let expected_se = if sigma > 0.0 {
        trend::trend_se(sigma, spec.years, spec.samples_per_year)?
    } else {
        0.0
    };
    Ok(TrendReport {
        scenario: spec.clone(),
        samples: n,
        expected_se,
        slope: EstimateSummary::from_values(&slopes),
        mean_fitted_se: fits.iter().map(|f| f.1).sum::<f64>() / total as f64,
        improving: Rate::from_counts(count(&|i| z[i] <= -1.0), total),
        deteriorating: Rate::from_counts(count(&|i| z[i] >= 1.0), total),
        detected: Rate::from_counts(count(&|i| z[i].abs() >= 1.0), total),
        sign_correct: (spec.trend != 0.0).then(|| {
            Rate::from_counts(count(&|i| slopes[i].signum() == spec.trend.signum()), total)
        }),
        exact: Rate::from_counts(count(&|i| (slopes[i] - spec.trend).abs() < 1e-9), total),
    })
}

/// Axis-aligned confidence ellipse of an `(μ, σ)` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceEllipse {
    pub mu: f64,
    pub sigma: f64,
    pub coverage: f64,
    /// `√(χ²₂ quantile)`.
    pub k: f64,
    pub semi_axis_mu: f64,
    pub semi_axis_sigma: f64,
}

impl ConfidenceEllipse {
    /// `count` points around the ellipse, starting on the +μ axis.
    pub fn outline(&self, count: usize) -> Vec<(f64, f64)> {
        (0..count)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / count as f64;
                (
                    self.mu + self.semi_axis_mu * th.cos(),
                    self.sigma + self.semi_axis_sigma * th.sin(),
                )
            })
            .collect()
    }
}

pub fn confidence_ellipse(params: &LogNormalParams, coverage: f64) -> Result<ConfidenceEllipse> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::param(
            "coverage",
            coverage,
            "must lie strictly between 0 and 1",
        ));
    }
    // chi-square with two degrees of freedom: F(x) = 1 - exp(-x/2)
    let k = (-2.0 * (1.0 - coverage).ln()).sqrt();
    Ok(ConfidenceEllipse {
        mu: params.mu,
        sigma: params.sigma,
        coverage,
        k,
        semi_axis_mu: k * params.se_mu(),
        semi_axis_sigma: k * params.se_sigma(),
    })
}
