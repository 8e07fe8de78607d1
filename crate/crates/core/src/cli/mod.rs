//! `swimstat` command line.
//!
//! Settings resolve as built-in defaults, then the `--config` JSON file, then
//! command-line flags.

pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::criteria::{Category, Criteria, CriteriaThresholds};
use crate::error::Error;
use crate::estimation::{
    empirical_stats, fit_lognormal, parametric_percentile, CensorPolicy, FitOptions,
    LogNormalParams, Sample,
};
use crate::ingest::{self, SiteInfo, SiteSeries};
use crate::simulate::{self, MethodReport, Rate, ScenarioSpec, StateOptions, Truth};
use crate::trend::{self, PowerQuery, TrendFit};

pub use report::{Cell, Format, Report, Table};

#[derive(Debug, Parser)]
#[command(
    name = "swimstat",
    version,
    about = "E. coli state and trend assessment for river monitoring sites"
)]
pub struct Cli {
    /// JSON file of setting overrides.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grade every site by the percentile rules and by its fitted (μ, σ).
    Classify(ClassifyArgs),
    /// Fit log-linear trends and project each site's state to a date.
    Trend(TrendArgs),
    /// Solve the trend detectability relation for one unknown.
    Power(PowerArgs),
    /// Seeded Monte Carlo comparison of estimators.
    Simulate(SimulateArgs),
    /// Correlate same-day log readings between sites.
    Correlate(CorrelateArgs),
    /// Category boundaries in the (μ, σ) plane.
    Boundaries(BoundaryArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// `site,date,value` CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// impute | clamp | drop
    #[arg(long)]
    pub censor_policy: Option<CensorPolicy>,
    /// `site,name,lat,lon` CSV adding a name column.
    #[arg(long)]
    pub sites: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Percentile,
    Parametric,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    #[default]
    State,
    Trend,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Skip the P95 rule for sites with fewer than 60 readings (percentile method).
    #[arg(long)]
    pub drop_p95_below_60: bool,
    /// Report the small-sample unbiased parametric P95.
    #[arg(long)]
    pub unbiased: bool,
    /// Add confidence ellipses of (μ, σ) at this coverage.
    #[arg(long)]
    pub ellipse_coverage: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrendArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Projection date; defaults to each site's last sample.
    #[arg(long)]
    pub at_date: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub years: Option<f64>,
    #[arg(long)]
    pub samples_per_year: Option<f64>,
    /// Trend per year in natural-log units.
    #[arg(long, allow_hyphen_values = true)]
    pub trend: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// Scenario JSON with the fields of a simulation scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// True median count (with --p95, instead of --mu/--sigma).
    #[arg(long)]
    pub median: Option<f64>,
    #[arg(long)]
    pub p95: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub trend: Option<f64>,
    #[arg(long)]
    pub samples_per_year: Option<f64>,
    #[arg(long)]
    pub years: Option<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report counts above this as censored.
    #[arg(long)]
    pub censor_above: Option<f64>,
    /// P95 pass/fail threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub unbiased: bool,
    /// Bins of the P95 estimate histogram.
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub min_pairs: Option<usize>,
    /// Also tabulate sampling day of month before and from this date.
    #[arg(long)]
    pub split_date: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub format: Option<Format>,
    pub censor_policy: Option<CensorPolicy>,
    pub method: Option<Method>,
    pub drop_p95_below_60: Option<bool>,
    pub unbiased: Option<bool>,
    pub ellipse_coverage: Option<f64>,
    pub at_date: Option<NaiveDate>,
    pub min_pairs: Option<usize>,
    pub split_date: Option<NaiveDate>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub thresholds: Option<CriteriaThresholds>,
    pub fit: Option<FitOptions>,
    pub experiment: Option<Experiment>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub trend: Option<f64>,
    pub samples_per_year: Option<f64>,
    pub years: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub censor_above: Option<f64>,
    pub threshold: Option<f64>,
    pub bins: Option<usize>,
}

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Io = 1,
    Usage = 2,
    Parse = 3,
    Computation = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    fn context(self, what: &str) -> Self {
        CliError {
            message: format!("{what}: {}", self.message),
            ..self
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io(_) => ExitKind::Io,
            Error::Csv(c) if c.is_io_error() => ExitKind::Io,
            Error::Parse(_) | Error::Csv(_) | Error::Json(_) => ExitKind::Parse,
            _ => ExitKind::Computation,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let file = File::open(path)
        .map_err(|e| CliError::from(Error::Io(e)).context(&path.display().to_string()))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::from(Error::Json(e)).context(&path.display().to_string()))
}

fn criteria(config: &ConfigFile) -> CliResult<Criteria> {
    Ok(match &config.thresholds {
        Some(t) => Criteria::new(t.clone())?,
        None => Criteria::default(),
    })
}

const MAX_LISTED_ROW_ERRORS: usize = 20;

/// Reads and merges input files; any malformed row fails the load.
fn load_series(paths: &[PathBuf]) -> CliResult<Vec<SiteSeries>> {
    let mut merged: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for path in paths {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|e| CliError::from(Error::Io(e)).context(&name))?;
        let ingested = ingest::parse_records(BufReader::new(file))
            .map_err(|e| CliError::from(e).context(&name))?;
        if !ingested.errors.is_empty() {
            let mut lines: Vec<String> = ingested
                .errors
                .iter()
                .take(MAX_LISTED_ROW_ERRORS)
                .map(|e| format!("{name}:{}: {}", e.line, e.message))
                .collect();
            if ingested.errors.len() > MAX_LISTED_ROW_ERRORS {
                lines.push(format!(
                    "... {} more",
                    ingested.errors.len() - MAX_LISTED_ROW_ERRORS
                ));
            }
            return Err(CliError {
                kind: ExitKind::Parse,
                message: format!(
                    "{} malformed rows\n{}",
                    ingested.errors.len(),
                    lines.join("\n")
                ),
            });
        }
        for s in ingested.series {
            merged.entry(s.site).or_default().extend(s.samples);
        }
    }
    Ok(merged
        .into_iter()
        .map(|(site, s)| SiteSeries::new(site, s))
        .collect())
}

fn load_metadata(path: Option<&Path>) -> CliResult<Option<HashMap<String, SiteInfo>>> {
    let Some(path) = path else { return Ok(None) };
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| CliError::from(Error::Io(e)).context(&name))?;
    Ok(Some(
        ingest::parse_site_metadata(BufReader::new(file))
            .map_err(|e| CliError::from(e).context(&name))?,
    ))
}

/// Same-site same-day readings, kept in the analysis but listed for review.
fn duplicates_table(series: &[SiteSeries]) -> Table {
    let mut t = Table::new("duplicates", &["site", "date", "readings"]);
    for s in series {
        for d in &s.duplicate_dates {
            let k = s.samples.iter().filter(|x| x.date == *d).count();
            t.push(vec![s.site.as_str().into(), d.to_string().into(), k.into()]);
        }
    }
    t
}

fn rate_cells(r: &Rate) -> [Cell; 2] {
    [r.rate.into(), r.mc_se.into()]
}

/// Report row with the percentile and parametric categories and the fit, when available.
type ClassifiedRow = (
    Vec<Cell>,
    Option<Category>,
    Option<Category>,
    Option<LogNormalParams>,
);

fn classify(args: &ClassifyArgs, config: &ConfigFile) -> CliResult<Report> {
    let criteria = criteria(config)?;
    let policy = args
        .input
        .censor_policy
        .or(config.censor_policy)
        .unwrap_or_default();
    let method = args.method.or(config.method).unwrap_or_default();
    let drop_p95 = args.drop_p95_below_60 || config.drop_p95_below_60.unwrap_or(false);
    let unbiased = args.unbiased || config.unbiased.unwrap_or(false);
    let coverage = args.ellipse_coverage.or(config.ellipse_coverage);
    let fit = config.fit.unwrap_or_default();
    let series = load_series(&args.input.inputs)?;
    let meta = load_metadata(args.input.sites.as_deref())?;
    let (pct, par) = match method {
        Method::Percentile => (true, false),
        Method::Parametric => (false, true),
        Method::Both => (true, true),
    };

    let mut columns = vec!["site"];
    if meta.is_some() {
        columns.push("name");
    }
    columns.extend(["n", "censored"]);
    if pct {
        columns.extend(["p50", "p95", "frac260", "frac540", "percentile_category"]);
    }
    if par {
        columns.extend([
            "mu",
            "se_mu",
            "sigma",
            "se_sigma",
            "p95_parametric",
            "parametric_category",
        ]);
    }
    let rows: Vec<CliResult<ClassifiedRow>> = series
        .par_iter()
        .map(|s| {
            let mut row: Vec<Cell> = vec![s.site.as_str().into()];
            if let Some(m) = &meta {
                row.push(m.get(&s.site).map(|i| i.name.clone()).into());
            }
            row.extend([s.samples.len().into(), s.censored().into()]);
            let mut pct_cat = None;
            if pct {
                let stats = empirical_stats(&s.samples, policy, &fit)
                    .map_err(|e| CliError::from(e).context(&s.site))?;
                let cat = criteria.classify_percentile(&stats, drop_p95);
                row.extend([
                    stats.p50.into(),
                    stats.p95.into(),
                    stats.frac260.into(),
                    stats.frac540.into(),
                ]);
                row.push(cat.to_string().into());
                pct_cat = Some(cat);
            }
            let mut par_cat = None;
            let mut params = None;
            if par {
                match fit_lognormal(&s.samples, policy, &fit) {
                    Ok(f) => {
                        let p = f.params;
                        let cat = criteria.classify_parametric(p.mu, p.sigma)?;
                        let p95 = parametric_percentile(&p, 0.95, unbiased)?;
                        row.extend([
                            p.mu.into(),
                            p.se_mu().into(),
                            p.sigma.into(),
                            p.se_sigma().into(),
                        ]);
                        row.extend([p95.value.into(), cat.to_string().into()]);
                        par_cat = Some(cat);
                        params = Some(p);
                    }
                    Err(_) => {
                        row.extend(std::iter::repeat_n(Cell::Empty, 5));
                        row.push("unavailable".into());
                    }
                }
            }
            Ok((row, pct_cat, par_cat, params))
        })
        .collect();

    let mut sites = Table::new("sites", &columns);
    let mut counts = [[0usize; 6]; 2];
    let mut ellipses = Table::new(
        "ellipses",
        &[
            "site",
            "mu",
            "sigma",
            "coverage",
            "k",
            "semi_axis_mu",
            "semi_axis_sigma",
        ],
    );
    for r in rows {
        let (row, a, b, params) = r?;
        if let (Some(cov), Some(p)) = (coverage, params) {
            let e = simulate::confidence_ellipse(&p, cov)?;
            ellipses.push(vec![
                row[0].clone(),
                e.mu.into(),
                e.sigma.into(),
                e.coverage.into(),
                e.k.into(),
                e.semi_axis_mu.into(),
                e.semi_axis_sigma.into(),
            ]);
        }
        sites.push(row);
        for (slot, cat) in counts.iter_mut().zip([a, b]) {
            slot[cat.map_or(5, Category::index)] += 1;
        }
    }
    let mut sum_cols = vec!["category"];
    if pct {
        sum_cols.push("percentile");
    }
    if par {
        sum_cols.push("parametric");
    }
    let mut summary = Table::new("summary", &sum_cols);
    let labels = Category::ALL
        .iter()
        .map(|c| c.to_string())
        .chain(["unavailable".to_string()]);
    for (i, label) in labels.enumerate() {
        let mut row: Vec<Cell> = vec![label.into()];
        if pct {
            row.push(counts[0][i].into());
        }
        if par {
            row.push(counts[1][i].into());
        }
        summary.push(row);
    }
    let mut tables = vec![sites, summary, duplicates_table(&series)];
    if coverage.is_some() {
        tables.push(ellipses);
    }
    Ok(Report { tables })
}

fn tier_label(z: f64) -> String {
    let k = z.abs().floor().min(3.0) as usize;
    match (k, z < 0.0) {
        (0, _) => "not_significant".into(),
        (k, true) => format!("improving_{k}sd"),
        (k, false) => format!("deteriorating_{k}sd"),
    }
}

type TrendOutcome = (TrendFit, Category, trend::StateAtTime);

fn trend_command(args: &TrendArgs, config: &ConfigFile) -> CliResult<Report> {
    let criteria = criteria(config)?;
    let policy = args
        .input
        .censor_policy
        .or(config.censor_policy)
        .unwrap_or_default();
    let at_date = args.at_date.or(config.at_date);
    let fit = config.fit.unwrap_or_default();
    let series = load_series(&args.input.inputs)?;
    let meta = load_metadata(args.input.sites.as_deref())?;

    let outcomes: Vec<(String, CliResult<TrendOutcome>)> = series
        .par_iter()
        .map(|s| {
            let out = trend::fit_trend(&s.samples, policy, &fit)
                .map_err(CliError::from)
                .and_then(|f| {
                    let now = trend::state_at(&f, f.last, &criteria)?.category;
                    let state = trend::state_at(&f, at_date.unwrap_or(f.last), &criteria)?;
                    Ok((f, now, state))
                });
            (s.site.clone(), out)
        })
        .collect();

    let mut columns = vec!["site"];
    if meta.is_some() {
        columns.push("name");
    }
    columns.extend([
        "n",
        "censored",
        "slope",
        "se_slope",
        "z",
        "tier",
        "intercept",
        "sigma_res",
        "residual_sd_ratio",
        "span_years",
        "iterations",
        "category_now",
        "date",
        "mu",
        "se_mu",
        "sigma",
        "se_sigma",
        "category",
        "extrapolation_years",
        "extrapolated",
    ]);
    let mut sites = Table::new("sites", &columns);
    let mut failures = Table::new("failures", &["site", "error"]);
    let mut fits = Vec::new();
    for (site, out) in outcomes {
        match out {
            Ok((f, now, st)) => {
                let mut row: Vec<Cell> = vec![site.as_str().into()];
                if let Some(m) = &meta {
                    row.push(m.get(&site).map(|i| i.name.clone()).into());
                }
                row.extend([
                    f.n.into(),
                    f.censored.into(),
                    f.slope.into(),
                    f.se_slope.into(),
                    f.z().into(),
                    tier_label(f.z()).into(),
                    f.intercept.into(),
                    f.sigma_res.into(),
                    f.residual_sd_ratio.into(),
                    f.span_years.into(),
                    f.iterations.into(),
                    now.to_string().into(),
                    st.date.to_string().into(),
                    st.mu.into(),
                    st.se_mu.into(),
                    st.sigma.into(),
                    st.se_sigma.into(),
                    st.category.to_string().into(),
                    st.extrapolation_years.into(),
                    st.extrapolated.into(),
                ]);
                sites.push(row);
                fits.push(f);
            }
            Err(e) => failures.push(vec![site.into(), e.message.into()]),
        }
    }

    let mut tiers = Table::new("tiers", &["tier", "count", "fraction", "se"]);
    if let Ok(t) = trend::significance_tiers(&fits) {
        let share = |k: usize| {
            let r = Rate::from_counts(k, t.total);
            vec![Cell::from(k), r.rate.into(), r.mc_se.into()]
        };
        for (dir, counts) in [
            ("improving", t.improving),
            ("deteriorating", t.deteriorating),
        ] {
            for (k, &c) in counts.iter().enumerate() {
                let mut row = vec![Cell::from(format!("{dir}_ge_{}sd", k + 1))];
                row.extend(share(c));
                tiers.push(row);
            }
        }
        let mut row = vec![Cell::from("not_significant")];
        row.extend(share(t.not_significant));
        tiers.push(row);
    }
    let mut deconv = Table::new(
        "deconvolution",
        &[
            "sites",
            "mean_slope",
            "observed_sd",
            "rms_se",
            "median_se",
            "true_sd",
        ],
    );
    if let Ok(p) = trend::deconvolve_trends(&fits) {
        deconv.push(vec![
            p.sites.into(),
            p.mean_slope.into(),
            p.observed_variance.sqrt().into(),
            p.mean_se_squared.sqrt().into(),
            p.median_se.into(),
            p.true_sd().into(),
        ]);
    }
    Ok(Report {
        tables: vec![sites, tiers, deconv, failures, duplicates_table(&series)],
    })
}

fn power(args: &PowerArgs, config: &ConfigFile) -> CliResult<Report> {
    let query = PowerQuery {
        sigma: args.sigma.or(config.sigma),
        years: args.years.or(config.years),
        per_year: args.samples_per_year.or(config.samples_per_year),
        trend: args.trend.or(config.trend),
    };
    let given = [query.sigma, query.years, query.per_year, query.trend]
        .iter()
        .flatten()
        .count();
    if given != 3 {
        return Err(CliError::usage(
            "give exactly three of --sigma, --years, --samples-per-year, --trend",
        ));
    }
    let s = query.solve()?;
    let solved = serde_json::to_value(s.solved)
        .map_err(Error::from)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let mut t = Table::new(
        "power",
        &[
            "sigma",
            "years",
            "samples_per_year",
            "trend",
            "total_samples",
            "solved",
        ],
    );
    t.push(vec![
        s.sigma.into(),
        s.years.into(),
        s.per_year.into(),
        s.trend.into(),
        (s.per_year * s.years).into(),
        solved.into(),
    ]);
    Ok(Report::single(t))
}

const DEFAULT_THRESHOLD: f64 = 1200.0;
const DEFAULT_BINS: usize = 40;

fn read_scenario(path: &Path) -> CliResult<ScenarioSpec> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| CliError::from(Error::Io(e)).context(&name))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::from(Error::Json(e)).context(&name))
}

/// Flags override the config file, which overrides the `--scenario` file.
fn scenario(args: &SimulateArgs, config: &ConfigFile) -> CliResult<ScenarioSpec> {
    let base = args.scenario.as_deref().map(read_scenario).transpose()?;
    let pick = |a: Option<f64>, c: Option<f64>| a.or(c);
    let by_params = (pick(args.mu, config.mu), pick(args.sigma, config.sigma));
    let by_pct = (pick(args.median, config.median), pick(args.p95, config.p95));
    let truth = match (by_params, by_pct, &base) {
        ((Some(mu), Some(sigma)), (None, None), _) => Truth::Params { mu, sigma },
        ((None, None), (Some(median), Some(p95)), _) => Truth::Percentiles { median, p95 },
        ((None, None), (None, None), Some(b)) => b.truth,
        _ => {
            return Err(CliError::usage(
                "give either --mu and --sigma or --median and --p95",
            ))
        }
    };
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| CliError::usage(format!("--{name} is required")))
    };
    let seed = args
        .seed
        .or(config.seed)
        .or(base.as_ref().map(|b| b.seed))
        .ok_or_else(|| CliError::usage("--seed is required for simulate"))?;
    let spec = ScenarioSpec {
        truth,
        trend: pick(args.trend, config.trend)
            .or(base.as_ref().map(|b| b.trend))
            .unwrap_or(0.0),
        samples_per_year: need(
            "samples-per-year",
            pick(args.samples_per_year, config.samples_per_year)
                .or(base.as_ref().map(|b| b.samples_per_year)),
        )?,
        years: need(
            "years",
            pick(args.years, config.years).or(base.as_ref().map(|b| b.years)),
        )?,
        replications: args
            .replications
            .or(config.replications)
            .or(base.as_ref().map(|b| b.replications))
            .unwrap_or(simulate::DEFAULT_REPLICATIONS),
        seed,
        censor_above: pick(args.censor_above, config.censor_above)
            .or(base.as_ref().and_then(|b| b.censor_above)),
    };
    spec.validate()?;
    Ok(spec)
}

fn summary_cells(s: &simulate::EstimateSummary) -> Vec<Cell> {
    let q = |level: f64| {
        s.quantiles
            .iter()
            .find(|(l, _)| (*l - level).abs() < 1e-12)
            .map(|&(_, v)| v)
    };
    vec![
        s.mean.into(),
        s.sd.into(),
        q(0.05).into(),
        q(0.5).into(),
        q(0.95).into(),
    ]
}

fn simulate_command(args: &SimulateArgs, config: &ConfigFile) -> CliResult<Report> {
    let spec = scenario(args, config)?;
    match args.experiment.or(config.experiment).unwrap_or_default() {
        Experiment::State => {
            let criteria = criteria(config)?;
            let opts = StateOptions {
                unbiased: args.unbiased || config.unbiased.unwrap_or(false),
                histogram_bins: args.bins.or(config.bins).unwrap_or(DEFAULT_BINS),
            };
            let threshold = args
                .threshold
                .or(config.threshold)
                .unwrap_or(DEFAULT_THRESHOLD);
            let r = simulate::run_state_experiment(&spec, threshold, &criteria, &opts)?;
            let mut summary = Table::new(
                "summary",
                &[
                    "method",
                    "samples",
                    "replications",
                    "seed",
                    "threshold",
                    "true_mu",
                    "true_sigma",
                    "true_p95",
                    "true_category",
                    "p95_mean",
                    "p95_sd",
                    "p95_q05",
                    "p95_q50",
                    "p95_q95",
                    "pass",
                    "pass_se",
                    "false_pass",
                    "false_pass_se",
                    "false_fail",
                    "false_fail_se",
                    "misclassified",
                    "misclassified_se",
                ],
            );
            let mut confusion = Table::new(
                "confusion",
                &["method", "true_category", "estimated_category", "count"],
            );
            for (name, m) in [("percentile", &r.percentile), ("parametric", &r.parametric)] {
                let m: &MethodReport = m;
                let mut row: Vec<Cell> = vec![
                    name.into(),
                    r.samples.into(),
                    spec.replications.into(),
                    spec.seed.into(),
                    threshold.into(),
                    r.true_mu.into(),
                    r.true_sigma.into(),
                    r.true_p95.into(),
                    r.true_category.to_string().into(),
                ];
                row.extend(summary_cells(&m.p95));
                for rate in [&m.pass, &m.false_pass, &m.false_fail, &m.misclassified] {
                    row.extend(rate_cells(rate));
                }
                summary.push(row);
                for (i, counts) in m.confusion.iter().enumerate() {
                    for (j, &c) in counts.iter().enumerate() {
                        if c > 0 {
                            confusion.push(vec![
                                name.into(),
                                Category::ALL[i].to_string().into(),
                                Category::ALL[j].to_string().into(),
                                c.into(),
                            ]);
                        }
                    }
                }
            }
            let mut hist = Table::new(
                "histogram",
                &["lower", "upper", "percentile_density", "parametric_density"],
            );
            for b in &r.histogram {
                hist.push(vec![
                    b.lower.into(),
                    b.upper.into(),
                    b.percentile_density.into(),
                    b.parametric_density.into(),
                ]);
            }
            Ok(Report {
                tables: vec![summary, confusion, hist],
            })
        }
        Experiment::Trend => {
            let r = simulate::run_trend_experiment(&spec)?;
            let (mu, sigma) = spec.truth.mu_sigma();
            let mut t = Table::new(
                "summary",
                &[
                    "samples",
                    "replications",
                    "seed",
                    "true_mu",
                    "true_sigma",
                    "true_trend",
                    "expected_se",
                    "slope_mean",
                    "slope_sd",
                    "slope_q05",
                    "slope_q50",
                    "slope_q95",
                    "mean_fitted_se",
                    "improving",
                    "improving_se",
                    "deteriorating",
                    "deteriorating_se",
                    "detected",
                    "detected_se",
                    "sign_correct",
                    "sign_correct_se",
                    "exact",
                ],
            );
            let mut row: Vec<Cell> = vec![
                r.samples.into(),
                spec.replications.into(),
                spec.seed.into(),
                mu.into(),
                sigma.into(),
                spec.trend.into(),
                r.expected_se.into(),
            ];
            row.extend(summary_cells(&r.slope));
            row.push(r.mean_fitted_se.into());
            for rate in [&r.improving, &r.deteriorating, &r.detected] {
                row.extend(rate_cells(rate));
            }
            match &r.sign_correct {
                Some(rate) => row.extend(rate_cells(rate)),
                None => row.extend([Cell::Empty, Cell::Empty]),
            }
            row.push(r.exact.rate.into());
            t.push(row);
            Ok(Report::single(t))
        }
    }
}

fn correlate(args: &CorrelateArgs, config: &ConfigFile) -> CliResult<Report> {
    let min_pairs = args
        .min_pairs
        .or(config.min_pairs)
        .unwrap_or(ingest::DEFAULT_MIN_PAIRS);
    let series = load_series(&args.inputs)?;
    let mut t = Table::new("correlations", &["siteA", "siteB", "n_pairs", "r"]);
    for p in ingest::same_day_correlations(&series, min_pairs)? {
        t.push(vec![
            p.site_a.into(),
            p.site_b.into(),
            p.n_pairs.into(),
            p.r.into(),
        ]);
    }
    let Some(split) = args.split_date.or(config.split_date) else {
        return Ok(Report::single(t));
    };
    let h = ingest::collection_day_histogram(&series, split);
    let mut days = Table::new("collection_days", &["day", "before", "from"]);
    for d in 0..31 {
        days.push(vec![(d + 1).into(), h.before[d].into(), h.from[d].into()]);
    }
    Ok(Report {
        tables: vec![t, days],
    })
}

const DEFAULT_SIGMA_RANGE: (f64, f64) = (0.2, 3.0);

fn boundaries(args: &BoundaryArgs, config: &ConfigFile) -> CliResult<Report> {
    let criteria = criteria(config)?;
    let lo = args
        .sigma_min
        .or(config.sigma_min)
        .unwrap_or(DEFAULT_SIGMA_RANGE.0);
    let hi = args
        .sigma_max
        .or(config.sigma_max)
        .unwrap_or(DEFAULT_SIGMA_RANGE.1);
    let mut t = Table::new(
        "boundaries",
        &[
            "category",
            "segment_index",
            "mu",
            "sigma",
            "active_criterion",
        ],
    );
    for poly in criteria.category_polygons((lo, hi))? {
        for (i, seg) in poly.ring().iter().enumerate() {
            let label = std::iter::once(seg.criterion)
                .chain(seg.coincident.iter().copied())
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("+");
            for (mu, sigma) in [seg.start, seg.end] {
                t.push(vec![
                    poly.category.to_string().into(),
                    i.into(),
                    mu.into(),
                    sigma.into(),
                    label.as_str().into(),
                ]);
            }
        }
    }
    Ok(Report::single(t))
}

/// Runs a parsed command and returns the rendered report.
pub fn execute(cli: &Cli) -> CliResult<String> {
    let config = load_config(cli.config.as_deref())?;
    let report = match &cli.command {
        Command::Classify(a) => classify(a, &config)?,
        Command::Trend(a) => trend_command(a, &config)?,
        Command::Power(a) => power(a, &config)?,
        Command::Simulate(a) => simulate_command(a, &config)?,
        Command::Correlate(a) => correlate(a, &config)?,
        Command::Boundaries(a) => boundaries(a, &config)?,
    };
    Ok(report.render(cli.format.or(config.format).unwrap_or_default())?)
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                ExitKind::Usage as u8
            } else {
                0
            });
        }
    };
    let result = execute(&cli).and_then(|text| match &cli.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::from(Error::Io(e)).context(&path.display().to_string())),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::from(Error::Io(e)))
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swimstat: {e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
