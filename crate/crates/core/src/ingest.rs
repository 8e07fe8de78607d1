//! Monitoring records: `site,date,value` CSV with censored value tokens.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Reading, Sample};

/// Minimum same-day pairs for a site pair to be correlated.
pub const DEFAULT_MIN_PAIRS: usize = 30;

/// Parses a value token: `240`, `<10`, `>24,200`.
///
/// Whitespace and thousands separators are ignored.
pub fn parse_reading(token: &str) -> Result<Reading> {
    let cleaned: String = token
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .collect();
    let (ctor, digits): (fn(f64) -> Reading, &str) = match cleaned.as_bytes().first() {
        Some(b'<') => (Reading::Below, &cleaned[1..]),
        Some(b'>') => (Reading::Above, &cleaned[1..]),
        _ => (Reading::Exact, &cleaned[..]),
    };
    let bad = || Error::Parse(format!("invalid value token `{token}`"));
    if digits.is_empty()
        || !digits.bytes().all(|b| {
            b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || b == b'-' || b == b'+'
        })
    {
        return Err(bad());
    }
    let v: f64 = digits.parse().map_err(|_| bad())?;
    if !(v.is_finite() && v > 0.0) {
        return Err(bad());
    }
    Ok(ctor(v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteSeries {
    pub site: String,
    /// Sorted by date; same-day entries keep file order.
    pub samples: Vec<Sample>,
    pub exact: usize,
    pub below: usize,
    pub above: usize,
    /// Dates with more than one reading.
    pub duplicate_dates: Vec<NaiveDate>,
}

impl SiteSeries {
    pub fn new(site: impl Into<String>, mut samples: Vec<Sample>) -> Self {
        samples.sort_by_key(|s| s.date);
        let mut series = SiteSeries {
            site: site.into(),
            samples,
            exact: 0,
            below: 0,
            above: 0,
            duplicate_dates: Vec::new(),
        };
        for s in &series.samples {
            match s.reading {
                Reading::Exact(_) => series.exact += 1,
                Reading::Below(_) => series.below += 1,
                Reading::Above(_) => series.above += 1,
            }
        }
        series.duplicate_dates = series
            .samples
            .windows(2)
            .filter(|w| w[0].date == w[1].date)
            .map(|w| w[0].date)
            .collect();
        series.duplicate_dates.dedup();
        series
    }

    pub fn censored(&self) -> usize {
        self.below + self.above
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ingested {
    /// One entry per site, ordered by site identifier.
    pub series: Vec<SiteSeries>,
    /// Rows that could not be parsed.
    pub errors: Vec<RowError>,
}

impl Ingested {
    /// `(site, date)` pairs with duplicate readings.
    pub fn duplicates(&self) -> Vec<(&str, NaiveDate)> {
        self.series
            .iter()
            .flat_map(|s| s.duplicate_dates.iter().map(move |&d| (s.site.as_str(), d)))
            .collect()
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Parse(format!("missing `{name}` column in header")))
}

/// Reads `site,date,value` records (ISO dates) into per-site series.
///
/// Malformed rows are collected in [`Ingested::errors`]; a missing header or
/// a file without data rows is an error.
pub fn parse_records<R: Read>(input: R) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::EmptyInput("empty file"));
    }
    let (ci, di, vi) = (
        column(&headers, "site")?,
        column(&headers, "date")?,
        column(&headers, "value")?,
    );

    let mut by_site: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows += 1;
        let line = record.position().map_or(0, |p| p.line());
        let parsed = (|| {
            let field = |i: usize| {
                record
                    .get(i)
                    .filter(|f| !f.is_empty())
                    .ok_or_else(|| Error::Parse(format!("missing field {}", i + 1)))
            };
            let site = field(ci)?;
            let date_str = field(di)?;
            let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d")
                .map_err(|_| Error::Parse(format!("invalid date `{date_str}`")))?;
            let reading = parse_reading(field(vi)?)?;
            Ok::<_, Error>((site.to_string(), Sample::new(date, reading)))
        })();
        match parsed {
            Ok((site, sample)) => by_site.entry(site).or_default().push(sample),
            Err(e) => errors.push(RowError {
                line,
                message: e.to_string(),
            }),
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput("file has no data rows"));
    }
    Ok(Ingested {
        series: by_site
            .into_iter()
            .map(|(site, s)| SiteSeries::new(site, s))
            .collect(),
        errors,
    })
}

/// Writes series back as `site,date,value`, keeping censor markers.
pub fn write_records<W: Write>(series: &[SiteSeries], output: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["site", "date", "value"])?;
    for s in series {
        for x in &s.samples {
            w.write_record([s.site.as_str(), &x.date.to_string(), &x.reading.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Optional site descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteInfo {
    pub site: String,
    pub name: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

pub fn parse_site_metadata<R: Read>(input: R) -> Result<HashMap<String, SiteInfo>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = HashMap::new();
    for row in reader.deserialize() {
        let info: SiteInfo = row?;
        out.insert(info.site.clone(), info);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPair {
    pub site_a: String,
    pub site_b: String,
    pub n_pairs: usize,
    pub r: f64,
}

/// Pearson correlation; `None` if either side has no spread.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Mean log count of exact readings per date.
fn daily_logs(series: &SiteSeries) -> BTreeMap<NaiveDate, f64> {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for s in &series.samples {
        if let Reading::Exact(v) = s.reading {
            let e = acc.entry(s.date).or_default();
            e.0 += v.ln();
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(d, (sum, k))| (d, sum / k as f64))
        .collect()
}

/// Correlations of same-day log readings for all site pairs with at least
/// `min_pairs` shared days, highest first. Censored readings are excluded.
pub fn same_day_correlations(
    series: &[SiteSeries],
    min_pairs: usize,
) -> Result<Vec<CorrelationPair>> {
    if min_pairs < 2 {
        return Err(Error::param(
            "min_pairs",
            min_pairs as f64,
            "must be at least 2",
        ));
    }
    let daily: Vec<BTreeMap<NaiveDate, f64>> = series.iter().map(daily_logs).collect();
    let mut out = Vec::new();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            let (x, y): (Vec<f64>, Vec<f64>) = daily[i]
                .iter()
                .filter_map(|(d, &a)| daily[j].get(d).map(|&b| (a, b)))
                .unzip();
            if x.len() < min_pairs {
                continue;
            }
            if let Some(r) = pearson(&x, &y) {
                let (a, b) = if series[i].site <= series[j].site {
                    (i, j)
                } else {
                    (j, i)
                };
                out.push(CorrelationPair {
                    site_a: series[a].site.clone(),
                    site_b: series[b].site.clone(),
                    n_pairs: x.len(),
                    r,
                });
            }
        }
    }
    out.sort_by(|p, q| {
        q.r.total_cmp(&p.r)
            .then_with(|| p.site_a.cmp(&q.site_a))
            .then_with(|| p.site_b.cmp(&q.site_b))
    });
    Ok(out)
}

/// Sampling counts by day of month, before and from `split`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DayHistograms {
    pub before: [usize; 31],
    pub from: [usize; 31],
}

pub fn collection_day_histogram(series: &[SiteSeries], split: NaiveDate) -> DayHistograms {
    let mut h = DayHistograms {
        before: [0; 31],
        from: [0; 31],
    };
    for s in series.iter().flat_map(|s| &s.samples) {
        let slot = (s.date.day() - 1) as usize;
        if s.date < split {
            h.before[slot] += 1;
        } else {
            h.from[slot] += 1;
        }
    }
    h
}
