//! Swimmability attribute bands for *E. coli*.
//!
//! Four criteria grade a site: the median (P50), the 95th percentile (P95),
//! and the fractions of samples above 260 and 540 per 100 mL (G260, G540).
//! Each criterion maps to a band A–E and the site takes the worst band.
//!
//! Under the lognormal model `log X ~ N(μ, σ)` every rung of every criterion
//! is a half-plane `μ + z·σ ≤ log(threshold)`, so the categories are convex
//! polygons in the `(μ, σ)` plane. [`geometry`] extracts those polygons.

pub mod geometry;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

pub use geometry::{BoundarySegment, CategoryPolygon, FrontierPoint};

/// Minimum number of samples for the 95th percentile to apply.
pub const MIN_SAMPLES_FOR_P95: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    A,
    B,
    C,
    D,
    E,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::A,
        Category::B,
        Category::C,
        Category::D,
        Category::E,
    ];

    pub fn colour(self) -> &'static str {
        match self {
            Category::A => "Blue",
            Category::B => "Green",
            Category::C => "Yellow",
            Category::D => "Orange",
            Category::E => "Red",
        }
    }

    /// A–C meet the national bottom line.
    pub fn is_swimmable(self) -> bool {
        self <= Category::C
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::A => "A",
            Category::B => "B",
            Category::C => "C",
            Category::D => "D",
            Category::E => "E",
        };
        f.write_str(s)
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| t.eq_ignore_ascii_case(&c.to_string()) || t.eq_ignore_ascii_case(c.colour()))
            .ok_or_else(|| Error::Parse(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    P50,
    P95,
    G260,
    G540,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::P50,
        Criterion::P95,
        Criterion::G260,
        Criterion::G540,
    ];

    /// Label priority when two criteria produce the same half-plane.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            Criterion::P50 => 0,
            Criterion::P95 => 1,
            Criterion::G540 => 2,
            Criterion::G260 => 3,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criterion::P50 => "P50",
            Criterion::P95 => "P95",
            Criterion::G260 => "G260",
            Criterion::G540 => "G540",
        };
        f.write_str(s)
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Criterion::ALL
            .into_iter()
            .find(|c| t.eq_ignore_ascii_case(&c.to_string()))
            .ok_or_else(|| Error::UnknownCriterion(s.to_string()))
    }
}

/// Exceedance criterion: fraction of samples above `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceBounds {
    pub threshold: f64,
    /// Upper fraction bounds of the successive bands.
    pub fractions: Vec<f64>,
}

/// Numeric thresholds of the four criteria, in counts per 100 mL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaThresholds {
    /// Median bounds for bands A–C and D.
    pub median: [f64; 2],
    /// 95th percentile bounds for bands A, B and C.
    pub p95: [f64; 3],
    /// Bands A, B, C, D.
    pub g540: ExceedanceBounds,
    /// Bands A, B–C, D.
    pub g260: ExceedanceBounds,
}

impl Default for CriteriaThresholds {
    fn default() -> Self {
        CriteriaThresholds {
            median: [130.0, 260.0],
            p95: [540.0, 1000.0, 1200.0],
            g540: ExceedanceBounds {
                threshold: 540.0,
                fractions: vec![0.05, 0.10, 0.20, 0.30],
            },
            g260: ExceedanceBounds {
                threshold: 260.0,
                fractions: vec![0.20, 0.34, 0.50],
            },
        }
    }
}

impl CriteriaThresholds {
    pub fn validate(&self) -> Result<()> {
        let counts = self
            .median
            .iter()
            .chain(&self.p95)
            .chain([&self.g540.threshold, &self.g260.threshold]);
        for &t in counts {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidThresholds(format!(
                    "threshold {t} must be positive"
                )));
            }
        }
        if !strictly_increasing(&self.median) || !strictly_increasing(&self.p95) {
            return Err(Error::InvalidThresholds(
                "count bounds must increase".into(),
            ));
        }
        for (name, b, len) in [("G540", &self.g540, 4), ("G260", &self.g260, 3)] {
            if b.fractions.len() != len {
                return Err(Error::InvalidThresholds(format!(
                    "{name} needs {len} fraction bounds, got {}",
                    b.fractions.len()
                )));
            }
            if !strictly_increasing(&b.fractions)
                || b.fractions.iter().any(|&q| !(q > 0.0 && q < 1.0))
            {
                return Err(Error::InvalidThresholds(format!(
                    "{name} fraction bounds must increase strictly within (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// `z_p` at the quantile levels the default criteria use.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalQuantileTable {
    entries: Vec<(f64, f64)>,
}

impl NormalQuantileTable {
    pub const LEVELS: [f64; 6] = [0.5, 0.66, 0.7, 0.8, 0.9, 0.95];

    pub fn new() -> Self {
        NormalQuantileTable {
            entries: Self::LEVELS
                .iter()
                .map(|&p| (p, normal::quantile(p)))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn z(&self, p: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|(q, _)| (q - p).abs() < 1e-12)
            .map(|&(_, z)| z)
    }
}

impl Default for NormalQuantileTable {
    fn default() -> Self {
        Self::new()
    }
}

/// `μ + z·σ ≤ bound`, admitting `band` and anything cleaner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionHalfPlane {
    pub criterion: Criterion,
    pub z: f64,
    /// Natural log of the count threshold.
    pub bound: f64,
    pub band: Category,
}

impl CriterionHalfPlane {
    pub fn contains(&self, mu: f64, sigma: f64) -> bool {
        mu + self.z * sigma <= self.bound
    }

    /// Largest `μ` inside the half-plane at the given `σ`.
    pub fn mu_limit(&self, sigma: f64) -> f64 {
        self.bound - self.z * sigma
    }
}

/// Empirical summary used by the percentile classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub p50: f64,
    pub p95: f64,
    pub frac260: f64,
    pub frac540: f64,
    pub n: usize,
}

/// Band of each criterion; `p95` is `None` when it was not applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CriterionBands {
    pub p50: Category,
    pub p95: Option<Category>,
    pub g260: Category,
    pub g540: Category,
}

impl CriterionBands {
    pub fn overall(&self) -> Category {
        [Some(self.p50), self.p95, Some(self.g260), Some(self.g540)]
            .into_iter()
            .flatten()
            .max()
            .expect("at least three bands")
    }
}

#[derive(Debug, Clone, Copy)]
struct Rung {
    band: Category,
    limit: f64,
}

#[derive(Debug, Clone)]
struct Ladder {
    rungs: Vec<Rung>,
    fallback: Category,
}

impl Ladder {
    fn band(&self, value: f64) -> Category {
        self.rungs
            .iter()
            .find(|r| value <= r.limit)
            .map_or(self.fallback, |r| r.band)
    }
}

/// The classification rules, in count space and as half-planes.
#[derive(Debug, Clone)]
pub struct Criteria {
    thresholds: CriteriaThresholds,
    p50: Ladder,
    p95: Ladder,
    g260: Ladder,
    g540: Ladder,
    planes: Vec<CriterionHalfPlane>,
}

impl Default for Criteria {
    fn default() -> Self {
        Criteria::new(CriteriaThresholds::default()).expect("default thresholds are valid")
    }
}

impl Criteria {
    pub fn new(thresholds: CriteriaThresholds) -> Result<Self> {
        thresholds.validate()?;
        use Category::*;
        let rungs = |bands: &[Category], limits: &[f64]| -> Vec<Rung> {
            bands
                .iter()
                .zip(limits)
                .map(|(&band, &limit)| Rung { band, limit })
                .collect()
        };
        let p50 = Ladder {
            rungs: rungs(&[A, D], &thresholds.median),
            fallback: E,
        };
        let p95 = Ladder {
            rungs: rungs(&[A, B, C], &thresholds.p95),
            fallback: D,
        };
        let g540 = Ladder {
            rungs: rungs(&[A, B, C, D], &thresholds.g540.fractions),
            fallback: E,
        };
        let g260 = Ladder {
            rungs: rungs(&[A, B, D], &thresholds.g260.fractions),
            fallback: E,
        };

        let z95 = normal::quantile(0.95);
        let mut planes = Vec::new();
        for r in &p50.rungs {
            planes.push(CriterionHalfPlane {
                criterion: Criterion::P50,
                z: 0.0,
                bound: r.limit.ln(),
                band: r.band,
            });
        }
        for r in &p95.rungs {
            planes.push(CriterionHalfPlane {
                criterion: Criterion::P95,
                z: z95,
                bound: r.limit.ln(),
                band: r.band,
            });
        }
        for (criterion, ladder, threshold) in [
            (Criterion::G540, &g540, thresholds.g540.threshold),
            (Criterion::G260, &g260, thresholds.g260.threshold),
        ] {
            for r in &ladder.rungs {
                // fraction above t is at most q  <=>  t is at least the (1-q) quantile
                planes.push(CriterionHalfPlane {
                    criterion,
                    z: normal::quantile(1.0 - r.limit),
                    bound: threshold.ln(),
                    band: r.band,
                });
            }
        }

        Ok(Criteria {
            thresholds,
            p50,
            p95,
            g260,
            g540,
            planes,
        })
    }

    pub fn thresholds(&self) -> &CriteriaThresholds {
        &self.thresholds
    }

    pub fn half_planes(&self) -> &[CriterionHalfPlane] {
        &self.planes
    }

    fn ladder(&self, criterion: Criterion) -> &Ladder {
        match criterion {
            Criterion::P50 => &self.p50,
            Criterion::P95 => &self.p95,
            Criterion::G260 => &self.g260,
            Criterion::G540 => &self.g540,
        }
    }

    /// Band of a single criterion value: a count for P50/P95, a fraction for G260/G540.
    pub fn band_for_criterion(&self, criterion: Criterion, value: f64) -> Result<Category> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::param(
                "value",
                value,
                "must be finite and non-negative",
            ));
        }
        Ok(self.ladder(criterion).band(value))
    }

    /// Same as [`Criteria::band_for_criterion`] with the criterion given by name.
    pub fn band_for_tag(&self, tag: &str, value: f64) -> Result<Category> {
        self.band_for_criterion(tag.parse()?, value)
    }

    pub fn percentile_bands(
        &self,
        stats: &EmpiricalStats,
        drop_p95_if_insufficient: bool,
    ) -> CriterionBands {
        let skip_p95 = drop_p95_if_insufficient && stats.n < MIN_SAMPLES_FOR_P95;
        CriterionBands {
            p50: self.p50.band(stats.p50),
            p95: (!skip_p95).then(|| self.p95.band(stats.p95)),
            g260: self.g260.band(stats.frac260),
            g540: self.g540.band(stats.frac540),
        }
    }

    /// Percentile classification: the worst band over the four measures.
    pub fn classify_percentile(
        &self,
        stats: &EmpiricalStats,
        drop_p95_if_insufficient: bool,
    ) -> Category {
        self.percentile_bands(stats, drop_p95_if_insufficient)
            .overall()
    }

    pub fn parametric_bands(&self, mu: f64, sigma: f64) -> Result<CriterionBands> {
        if !mu.is_finite() {
            return Err(Error::param("mu", mu, "must be finite"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::param(
                "sigma",
                sigma,
                "must be finite and non-negative",
            ));
        }
        let band = |criterion: Criterion| {
            self.planes
                .iter()
                .filter(|p| p.criterion == criterion)
                .find(|p| p.contains(mu, sigma))
                .map_or(self.ladder(criterion).fallback, |p| p.band)
        };
        Ok(CriterionBands {
            p50: band(Criterion::P50),
            p95: Some(band(Criterion::P95)),
            g260: band(Criterion::G260),
            g540: band(Criterion::G540),
        })
    }

    /// Parametric classification of the state `log X ~ N(μ, σ)`.
    pub fn classify_parametric(&self, mu: f64, sigma: f64) -> Result<Category> {
        Ok(self.parametric_bands(mu, sigma)?.overall())
    }

    /// Planes that must hold for the category to be `limit` or cleaner.
    pub(crate) fn frontier_planes(&self, limit: Category) -> Vec<CriterionHalfPlane> {
        let mut out = Vec::new();
        for criterion in Criterion::ALL {
            if self.ladder(criterion).fallback <= limit {
                continue;
            }
            if let Some(p) = self
                .planes
                .iter()
                .filter(|p| p.criterion == criterion && p.band <= limit)
                .max_by_key(|p| p.band)
            {
                out.push(*p);
            }
        }
        out
    }
}
