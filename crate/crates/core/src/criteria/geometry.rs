//! Category polygons in the `(μ, σ)` plane.
//!
//! At fixed `σ` the category is monotone in `μ`, so the region of category
//! `k` or cleaner is `μ ≤ frontier_k(σ)`, the lower envelope of the planes
//! that gate `k`. All envelopes are piecewise linear; breakpoints come from
//! pairwise intersections of the half-plane boundary lines.

use serde::Serialize;

use super::{Category, Criteria, Criterion, CriterionHalfPlane};
use crate::error::{Error, Result};

const EPS: f64 = 1e-12;
const MAX_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub mu: f64,
    /// Criteria whose plane attains the frontier, in label priority order.
    pub active: Vec<Criterion>,
}

/// One straight piece of a category boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySegment {
    pub criterion: Criterion,
    /// Other criteria sharing exactly the same boundary line.
    pub coincident: Vec<Criterion>,
    /// Category on the other side of this segment.
    pub neighbor: Category,
    /// `(μ, σ)` at the lower `σ` end.
    pub start: (f64, f64),
    /// `(μ, σ)` at the upper `σ` end.
    pub end: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryPolygon {
    pub category: Category,
    /// Boundary towards cleaner categories (smaller μ), ordered by σ.
    pub lower: Vec<BoundarySegment>,
    /// Boundary towards dirtier categories (larger μ), ordered by σ.
    pub upper: Vec<BoundarySegment>,
}

impl CategoryPolygon {
    /// Closed ring order: upper boundary upwards in σ, then lower boundary downwards.
    pub fn ring(&self) -> Vec<BoundarySegment> {
        let mut out = self.upper.clone();
        out.extend(self.lower.iter().rev().map(|s| BoundarySegment {
            start: s.end,
            end: s.start,
            ..s.clone()
        }));
        out
    }
}

fn label(group: &[CriterionHalfPlane]) -> (Criterion, Vec<Criterion>) {
    let mut tags: Vec<Criterion> = group.iter().map(|p| p.criterion).collect();
    tags.sort_by_key(|c| c.precedence());
    tags.dedup();
    (tags[0], tags[1..].to_vec())
}

/// Planes attaining the lower envelope at `sigma`; identical lines are grouped.
fn envelope(planes: &[CriterionHalfPlane], sigma: f64) -> Option<(f64, Vec<CriterionHalfPlane>)> {
    let mu = planes
        .iter()
        .map(|p| p.mu_limit(sigma))
        .fold(f64::INFINITY, f64::min);
    if mu.is_infinite() {
        return None;
    }
    let group = planes
        .iter()
        .filter(|p| (p.mu_limit(sigma) - mu).abs() <= EPS * (1.0 + mu.abs()))
        .copied()
        .collect();
    Some((mu, group))
}

impl Criteria {
    /// Largest μ at which the category is still `limit` or cleaner.
    ///
    /// Returns `None` for `E`, which has no upper frontier.
    pub fn frontier_at(&self, limit: Category, sigma: f64) -> Option<FrontierPoint> {
        let planes = self.frontier_planes(limit);
        let (mu, group) = envelope(&planes, sigma)?;
        let (first, mut rest) = label(&group);
        rest.insert(0, first);
        Some(FrontierPoint { mu, active: rest })
    }

    /// Boundaries of all five categories over `sigma_range`.
    ///
    /// A and E are unbounded in μ, so their `lower` / `upper` lists are empty.
    /// Categories with an empty region over part of the range only carry
    /// segments where the region has positive width.
    pub fn category_polygons(&self, sigma_range: (f64, f64)) -> Result<Vec<CategoryPolygon>> {
        let (lo, hi) = sigma_range;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi > MAX_SIGMA {
            return Err(Error::param("sigma_range", lo, "must lie within (0, 5]"));
        }
        if hi <= lo {
            return Err(Error::EmptyInput("sigma range"));
        }

        let frontiers: Vec<Vec<CriterionHalfPlane>> = Category::ALL[..4]
            .iter()
            .map(|&k| self.frontier_planes(k))
            .collect();

        let mut breaks = vec![lo, hi];
        let all = self.half_planes();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                let dz = a.z - b.z;
                if dz.abs() < EPS {
                    continue;
                }
                let s = (a.bound - b.bound) / dz;
                if s > lo && s < hi {
                    breaks.push(s);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < EPS);

        let mut polygons: Vec<CategoryPolygon> = Category::ALL
            .iter()
            .map(|&category| CategoryPolygon {
                category,
                lower: Vec::new(),
                upper: Vec::new(),
            })
            .collect();

        for w in breaks.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let mid = 0.5 * (s0 + s1);
            // active plane of each frontier at the interval midpoint
            let active: Vec<(f64, Vec<CriterionHalfPlane>)> = frontiers
                .iter()
                .map(|f| envelope(f, mid).expect("every frontier has planes"))
                .collect();
            let upper_mu = |j: usize| if j < 4 { active[j].0 } else { f64::INFINITY };
            let lower_mu = |j: usize| {
                if j > 0 {
                    active[j - 1].0
                } else {
                    f64::NEG_INFINITY
                }
            };
            let nonempty: Vec<bool> = (0..5).map(|j| upper_mu(j) - lower_mu(j) > EPS).collect();

            for j in 0..5 {
                if !nonempty[j] {
                    continue;
                }
                if j < 4 {
                    let neighbor = (j + 1..5).find(|&i| nonempty[i]).expect("E is never empty");
                    push_piece(&mut polygons[j].upper, &active[j].1, neighbor, s0, s1);
                }
                if j > 0 {
                    let neighbor = (0..j).rev().find(|&i| nonempty[i]);
                    if let Some(neighbor) = neighbor {
                        push_piece(&mut polygons[j].lower, &active[j - 1].1, neighbor, s0, s1);
                    }
                }
            }
        }
        Ok(polygons)
    }
}

fn push_piece(
    out: &mut Vec<BoundarySegment>,
    group: &[CriterionHalfPlane],
    neighbor: usize,
    s0: f64,
    s1: f64,
) {
    let plane = group[0];
    let neighbor = Category::from_index(neighbor).expect("index below five");
    let (criterion, coincident) = label(group);
    if let Some(last) = out.last_mut() {
        let same_line = (last.end.1 - s0).abs() < EPS
            && last.neighbor == neighbor
            && last.criterion == criterion
            && (last.end.0 - plane.mu_limit(s0)).abs() < 1e-9
            && {
                let slope = (last.end.0 - last.start.0) / (last.end.1 - last.start.1);
                (slope + plane.z).abs() < 1e-9
            };
        if same_line {
            last.end = (plane.mu_limit(s1), s1);
            return;
        }
    }
    out.push(BoundarySegment {
        criterion,
        coincident,
        neighbor,
        start: (plane.mu_limit(s0), s0),
        end: (plane.mu_limit(s1), s1),
    });
}
