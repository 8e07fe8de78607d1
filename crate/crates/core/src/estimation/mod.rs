//! Lognormal parameter and percentile estimation from monitoring samples,
//! including readings censored at a laboratory reporting bound.

pub(crate) mod impute;
mod percentile;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::criteria::EmpiricalStats;
use crate::error::{Error, Result};

pub use percentile::{
    hazen_percentile, parametric_percentile, sampling_coefficients, PercentileEstimate,
    SamplingCoefficients, SmallSampleFactors,
};

use impute::{Censored, Model, Side};

/// One laboratory result in counts per 100 mL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Reading {
    Exact(f64),
    /// Reported as `<b`.
    Below(f64),
    /// Reported as `>b`.
    Above(f64),
}

impl Reading {
    pub fn value(self) -> f64 {
        match self {
            Reading::Exact(v) | Reading::Below(v) | Reading::Above(v) => v,
        }
    }

    pub fn is_censored(self) -> bool {
        !matches!(self, Reading::Exact(_))
    }

    /// `Some(true)` if the reading is certainly above `threshold`,
    /// `Some(false)` if certainly not, `None` when the bound does not decide.
    pub fn exceeds(self, threshold: f64) -> Option<bool> {
        match self {
            Reading::Exact(v) => Some(v > threshold),
            Reading::Above(b) if b >= threshold => Some(true),
            Reading::Below(b) if b <= threshold => Some(false),
            _ => None,
        }
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reading::Exact(v) => write!(f, "{v}"),
            Reading::Below(v) => write!(f, "<{v}"),
            Reading::Above(v) => write!(f, ">{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub date: NaiveDate,
    pub reading: Reading,
}

impl Sample {
    pub fn new(date: NaiveDate, reading: Reading) -> Self {
        Sample { date, reading }
    }
}

/// Treatment of censored readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensorPolicy {
    /// Replace by the conditional mean under the fitted model, iterated.
    #[default]
    Impute,
    /// Replace by the reporting bound.
    #[serde(alias = "clamp-to-bound")]
    Clamp,
    /// Discard.
    Drop,
}

impl FromStr for CensorPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "impute" => Ok(CensorPolicy::Impute),
            "clamp" | "clamp-to-bound" => Ok(CensorPolicy::Clamp),
            "drop" => Ok(CensorPolicy::Drop),
            other => Err(Error::Parse(format!("unknown censor policy `{other}`"))),
        }
    }
}

impl fmt::Display for CensorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CensorPolicy::Impute => "impute",
            CensorPolicy::Clamp => "clamp",
            CensorPolicy::Drop => "drop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Stop when parameters and imputed values all move less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_censored_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-10,
            max_iterations: 500,
            max_censored_fraction: 0.5,
        }
    }
}

/// `(μ, σ)` of log counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
    /// Number of values the estimate is based on.
    pub n: usize,
    pub censored: usize,
}

impl LogNormalParams {
    pub fn new(mu: f64, sigma: f64, n: usize, censored: usize) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param("mu", mu, "must be finite"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", sigma, "must be positive"));
        }
        Ok(LogNormalParams {
            mu,
            sigma,
            n,
            censored,
        })
    }

    /// From a median and 95th percentile in counts.
    pub fn from_percentiles(median: f64, p95: f64, n: usize) -> Result<Self> {
        if !(median > 0.0 && p95 > median) {
            return Err(Error::param("p95", p95, "must exceed a positive median"));
        }
        let sigma = (p95.ln() - median.ln()) / crate::normal::quantile(0.95);
        Self::new(median.ln(), sigma, n, 0)
    }

    pub fn se_mu(&self) -> f64 {
        self.sigma / (self.n as f64).sqrt()
    }

    pub fn se_sigma(&self) -> f64 {
        self.sigma / (2.0 * self.n as f64).sqrt()
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImputedValue {
    /// Index into the input samples.
    pub sample: usize,
    pub log_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationResult {
    pub params: LogNormalParams,
    /// Resolved log values of censored samples (imputed or clamped).
    pub imputed: Vec<ImputedValue>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sample mean and sample standard deviation (n−1 divisor).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Working log values for a policy, with the censored ones marked.
pub(crate) struct Prepared {
    pub values: Vec<f64>,
    /// Sample index of each working value.
    pub origin: Vec<usize>,
    pub censored: Vec<Censored>,
    pub censored_total: usize,
}

pub(crate) fn prepare(
    samples: &[Sample],
    policy: CensorPolicy,
    opts: &FitOptions,
    min_exact: usize,
) -> Result<Prepared> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    let censored_total = samples.iter().filter(|s| s.reading.is_censored()).count();
    let exact = samples.len() - censored_total;
    if exact < min_exact {
        return Err(Error::TooFewExact {
            required: min_exact,
            found: exact,
        });
    }
    let fraction = censored_total as f64 / samples.len() as f64;
    if fraction > opts.max_censored_fraction {
        return Err(Error::TooMuchCensoring {
            fraction,
            limit: opts.max_censored_fraction,
        });
    }
    let mut prepared = Prepared {
        values: Vec::with_capacity(samples.len()),
        origin: Vec::with_capacity(samples.len()),
        censored: Vec::new(),
        censored_total,
    };
    for (i, s) in samples.iter().enumerate() {
        let v = s.reading.value();
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param("reading", v, "must be positive"));
        }
        let side = match s.reading {
            Reading::Exact(_) => None,
            Reading::Below(_) => Some(Side::Below),
            Reading::Above(_) => Some(Side::Above),
        };
        match (side, policy) {
            (Some(_), CensorPolicy::Drop) => continue,
            (Some(side), CensorPolicy::Impute) => prepared.censored.push(Censored {
                pos: prepared.values.len(),
                side,
                log_bound: v.ln(),
            }),
            _ => {}
        }
        prepared.values.push(v.ln());
        prepared.origin.push(i);
    }
    Ok(prepared)
}

struct Constant {
    mu: f64,
    sigma: f64,
}

impl Model for Constant {
    fn params(&self) -> Vec<f64> {
        vec![self.mu, self.sigma]
    }
    fn location(&self, _pos: usize) -> f64 {
        self.mu
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Fits `(μ, σ)` of the log counts, resolving censored readings per `policy`.
///
/// Requires at least two exact readings. Without censoring this is the
/// sample mean and sample SD of the logs.
pub fn fit_lognormal(
    samples: &[Sample],
    policy: CensorPolicy,
    opts: &FitOptions,
) -> Result<ImputationResult> {
    let mut prep = prepare(samples, policy, opts, 2)?;
    let (model, iterations) = impute::iterate(&mut prep.values, &prep.censored, opts, |v| {
        let (mu, sigma) = mean_sd(v);
        Ok(Constant { mu, sigma })
    })?;
    let imputed = prep
        .values
        .iter()
        .zip(&prep.origin)
        .filter(|(_, &i)| samples[i].reading.is_censored())
        .map(|(&log_value, &sample)| ImputedValue { sample, log_value })
        .collect();
    Ok(ImputationResult {
        params: LogNormalParams::new(
            model.mu,
            model.sigma,
            prep.values.len(),
            prep.censored_total,
        )?,
        imputed,
        iterations,
        converged: true,
    })
}

/// Hazen median and 95th percentile plus exceedance fractions of 260 and 540.
///
/// Censored readings whose bound already decides an exceedance count as such
/// under every policy. Otherwise they take their imputed value (falling back
/// to the bound when the site cannot be fitted), their bound, or are dropped.
pub fn empirical_stats(
    samples: &[Sample],
    policy: CensorPolicy,
    opts: &FitOptions,
) -> Result<EmpiricalStats> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    let mut resolved: Vec<Option<f64>> = samples
        .iter()
        .map(|s| match (s.reading, policy) {
            (Reading::Exact(v), _) => Some(v.ln()),
            (_, CensorPolicy::Drop) => None,
            (r, _) => Some(r.value().ln()),
        })
        .collect();
    if policy == CensorPolicy::Impute && samples.iter().any(|s| s.reading.is_censored()) {
        if let Ok(fit) = fit_lognormal(samples, policy, opts) {
            for iv in &fit.imputed {
                resolved[iv.sample] = Some(iv.log_value);
            }
        }
    }

    let mut logs: Vec<f64> = resolved.iter().flatten().copied().collect();
    if logs.is_empty() {
        return Err(Error::EmptyInput("every reading was dropped"));
    }
    logs.sort_by(f64::total_cmp);

    let fraction_above = |threshold: f64| {
        let (mut above, mut total) = (0usize, 0usize);
        for (s, r) in samples.iter().zip(&resolved) {
            let decided = s
                .reading
                .exceeds(threshold)
                .or_else(|| r.map(|l| l > threshold.ln()));
            if let Some(x) = decided {
                total += 1;
                above += usize::from(x);
            }
        }
        if total == 0 {
            0.0
        } else {
            above as f64 / total as f64
        }
    };

    Ok(EmpiricalStats {
        p50: hazen_percentile(&logs, 0.5)?.exp(),
        p95: hazen_percentile(&logs, 0.95)?.exp(),
        frac260: fraction_above(260.0),
        frac540: fraction_above(540.0),
        n: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    fn exact(values: &[f64]) -> Vec<Sample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample::new(day(i as i64), Reading::Exact(v)))
            .collect()
    }

    #[test]
    fn exact_moments() {
        let s = exact(&[1f64.exp(), 2f64.exp(), 3f64.exp()]);
        let fit = fit_lognormal(&s, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        assert!((fit.params.mu - 2.0).abs() < 1e-12);
        assert!((fit.params.sigma - 1.0).abs() < 1e-12);
        assert_eq!(fit.iterations, 0);
        assert!(fit.imputed.is_empty());
        assert!((fit.params.se_mu() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((fit.params.se_sigma() - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn policies_differ_on_censored_data() {
        let mut s = exact(&[50.0, 80.0, 120.0, 300.0, 90.0, 60.0, 200.0, 150.0]);
        s.push(Sample::new(day(20), Reading::Above(400.0)));
        let opts = FitOptions::default();
        let drop = fit_lognormal(&s, CensorPolicy::Drop, &opts).unwrap();
        let clamp = fit_lognormal(&s, CensorPolicy::Clamp, &opts).unwrap();
        let imp = fit_lognormal(&s, CensorPolicy::Impute, &opts).unwrap();
        assert_eq!(drop.params.n, 8);
        assert_eq!(clamp.params.n, 9);
        assert!(drop.params.mu < clamp.params.mu && clamp.params.mu < imp.params.mu);
        assert_eq!(clamp.imputed[0].log_value, 400f64.ln());
        assert!(imp.imputed[0].log_value > 400f64.ln());
        assert!(imp.iterations > 0 && imp.converged);
    }

    #[test]
    fn left_censoring_imputes_below_bound() {
        let mut s = exact(&[5.0, 12.0, 30.0, 8.0, 20.0, 15.0]);
        s.push(Sample::new(day(30), Reading::Below(4.0)));
        s.push(Sample::new(day(31), Reading::Above(60.0)));
        let fit = fit_lognormal(&s, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        let below = fit.imputed.iter().find(|v| v.sample == 6).unwrap();
        let above = fit.imputed.iter().find(|v| v.sample == 7).unwrap();
        assert!(below.log_value < 4f64.ln());
        assert!(above.log_value > 60f64.ln());
    }

    #[test]
    fn fixed_point_is_stable() {
        let mut s = exact(&[
            50.0, 80.0, 120.0, 300.0, 90.0, 60.0, 200.0, 150.0, 700.0, 40.0,
        ]);
        s.push(Sample::new(day(40), Reading::Above(500.0)));
        s.push(Sample::new(day(41), Reading::Below(45.0)));
        let opts = FitOptions::default();
        let fit = fit_lognormal(&s, CensorPolicy::Impute, &opts).unwrap();
        // one more update from the converged state
        let mut logs: Vec<f64> = s.iter().map(|x| x.reading.value().ln()).collect();
        for iv in &fit.imputed {
            logs[iv.sample] = iv.log_value;
        }
        for (idx, side, bound) in [(10, Side::Above, 500f64), (11, Side::Below, 45f64)] {
            logs[idx] = impute::conditional_mean(fit.params.mu, fit.params.sigma, side, bound.ln());
        }
        let (mu, sigma) = mean_sd(&logs);
        assert!((mu - fit.params.mu).abs() < opts.tolerance);
        assert!((sigma - fit.params.sigma).abs() < opts.tolerance);
    }

    #[test]
    fn preconditions() {
        let opts = FitOptions::default();
        let one = exact(&[10.0]);
        assert!(matches!(
            fit_lognormal(&one, CensorPolicy::Impute, &opts),
            Err(Error::TooFewExact { .. })
        ));
        let mut heavy = exact(&[10.0, 20.0]);
        for i in 0..3 {
            heavy.push(Sample::new(day(10 + i), Reading::Above(50.0)));
        }
        assert!(matches!(
            fit_lognormal(&heavy, CensorPolicy::Impute, &opts),
            Err(Error::TooMuchCensoring { .. })
        ));
        let lenient = FitOptions {
            max_censored_fraction: 0.8,
            ..opts
        };
        assert!(fit_lognormal(&heavy, CensorPolicy::Impute, &lenient).is_ok());
        let strict = FitOptions {
            max_iterations: 1,
            ..lenient
        };
        assert!(matches!(
            fit_lognormal(&heavy, CensorPolicy::Impute, &strict),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn constant_data_stats() {
        let s = exact(&[100.0; 60]);
        let st = empirical_stats(&s, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        assert!((st.p50 - 100.0).abs() < 1e-9 && (st.p95 - 100.0).abs() < 1e-9);
        assert_eq!((st.frac260, st.frac540, st.n), (0.0, 0.0, 60));
    }

    #[test]
    fn decided_censored_exceedance_counts_under_every_policy() {
        let mut s = exact(&[100.0; 59]);
        s.push(Sample::new(day(100), Reading::Above(9700.0)));
        for policy in [
            CensorPolicy::Impute,
            CensorPolicy::Clamp,
            CensorPolicy::Drop,
        ] {
            let st = empirical_stats(&s, policy, &FitOptions::default()).unwrap();
            assert!((st.frac540 - 1.0 / 60.0).abs() < 1e-15, "{policy}");
            assert!((st.frac260 - 1.0 / 60.0).abs() < 1e-15, "{policy}");
        }
    }

    #[test]
    fn empirical_stats_on_a_censored_singleton() {
        let s = vec![Sample::new(day(0), Reading::Below(4.0))];
        let st = empirical_stats(&s, CensorPolicy::Impute, &FitOptions::default()).unwrap();
        assert!((st.p50 - 4.0).abs() < 1e-12);
        assert!(empirical_stats(&s, CensorPolicy::Drop, &FitOptions::default()).is_err());
        assert!(empirical_stats(&[], CensorPolicy::Drop, &FitOptions::default()).is_err());
    }

    #[test]
    fn reading_display_round_trip_tokens() {
        assert_eq!(Reading::Above(9700.0).to_string(), ">9700");
        assert_eq!(Reading::Below(1.0).to_string(), "<1");
        assert_eq!(Reading::Exact(2.5).to_string(), "2.5");
        assert_eq!(
            "clamp-to-bound".parse::<CensorPolicy>().unwrap(),
            CensorPolicy::Clamp
        );
    }
}
