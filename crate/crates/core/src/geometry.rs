//! Perforated domains: an axis-aligned rectangle minus a finite set of
//! disjoint closed disks.
//!
//! Walkers query this module on every micro step, so perforation lookup goes
//! through a uniform bucket grid instead of a linear scan.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// A point or vector in the plane.
pub type Vec2 = [f64; 2];

/// Distance below which a point counts as lying on a boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Rejection sampling gives up after this many attempts per requested point.
pub const SAMPLING_ATTEMPTS_PER_POINT: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("projection undefined at center")]
    ProjectionAtCenter,
    #[error("domain nearly covered: accepted {accepted} of {attempts} attempts")]
    DomainNearlyCovered { accepted: usize, attempts: usize },
    #[error("invalid domain: {0}")]
    Invalid(String),
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Rect {
    pub fn new(lo: Vec2, hi: Vec2) -> Self {
        Self { lo, hi }
    }

    /// The square `[-0.5, 0.5]^2` used by all the bundled experiments.
    pub fn unit_square() -> Self {
        Self::new([-0.5, -0.5], [0.5, 0.5])
    }

    pub fn is_valid(&self) -> bool {
        (0..2).all(|k| self.lo[k].is_finite() && self.hi[k].is_finite() && self.lo[k] < self.hi[k])
    }

    pub fn center(&self) -> Vec2 {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn area(&self) -> f64 {
        self.width(0) * self.width(1)
    }

    /// Inside the closed rectangle, up to [`BOUNDARY_TOL`].
    pub fn contains(&self, p: Vec2) -> bool {
        (0..2).all(|k| p[k] >= self.lo[k] - BOUNDARY_TOL && p[k] <= self.hi[k] + BOUNDARY_TOL)
    }

    pub fn contains_strictly(&self, p: Vec2) -> bool {
        (0..2).all(|k| p[k] > self.lo[k] && p[k] < self.hi[k])
    }

    /// Distance from an inside point to the nearest edge.
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        (0..2)
            .map(|k| (p[k] - self.lo[k]).min(self.hi[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when `p` sits on one of the four edges within tolerance.
    pub fn on_boundary(&self, p: Vec2) -> bool {
        self.contains(p) && self.distance_to_boundary(p) <= BOUNDARY_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perforation {
    pub center: Vec2,
    pub radius: f64,
}

impl Perforation {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Closed-disk membership. This is the reflection trigger.
    #[inline]
    pub fn contains_closed(&self, p: Vec2) -> bool {
        let d = sub(p, self.center);
        dot(d, d) <= self.radius * self.radius
    }

    /// Strictly inside the disk by more than the boundary tolerance.
    #[inline]
    pub fn contains_strictly(&self, p: Vec2) -> bool {
        norm(sub(p, self.center)) < self.radius - BOUNDARY_TOL
    }

    /// Outward unit normal of the disk at the radial projection of `p`.
    pub fn outward_normal(&self, p: Vec2) -> Result<Vec2, GeometryError> {
        let d = sub(p, self.center);
        let r = norm(d);
        if r <= 1e-14 {
            return Err(GeometryError::ProjectionAtCenter);
        }
        Ok(scale(d, 1.0 / r))
    }
}

/// Radial projection of `y` onto the circle bounding `perf`.
pub fn project_to_circle(perf: &Perforation, y: Vec2) -> Result<Vec2, GeometryError> {
    let n = perf.outward_normal(y)?;
    Ok(add(perf.center, scale(n, perf.radius)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    InPerforation(usize),
    OutsideRect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    InvalidRect,
    NonPositiveRadius(usize),
    Overlap(usize, usize),
    Protrudes(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidRect => write!(f, "invalid_rect"),
            Violation::NonPositiveRadius(i) => write!(f, "nonpositive_radius({i})"),
            Violation::Overlap(i, j) => write!(f, "overlap({i},{j})"),
            Violation::Protrudes(i) => write!(f, "protrudes({i})"),
        }
    }
}

/// Bucket grid over the rectangle. Each bucket lists the perforations whose
/// bounding boxes touch it.
#[derive(Debug, Clone)]
struct BucketGrid {
    origin: Vec2,
    cell: Vec2,
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl BucketGrid {
    fn build(rect: &Rect, perforations: &[Perforation]) -> Self {
        let n = perforations.len();
        // Roughly one perforation per bucket, never more than 512 per axis.
        let per_axis = ((n as f64).sqrt().ceil() as usize).clamp(1, 512);
        let dims = [per_axis, per_axis];
        let cell = [rect.width(0) / per_axis as f64, rect.width(1) / per_axis as f64];
        let mut grid = Self {
            origin: rect.lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1]],
        };
        for (idx, p) in perforations.iter().enumerate() {
            let lo = grid.index_of(sub(p.center, [p.radius, p.radius]));
            let hi = grid.index_of(add(p.center, [p.radius, p.radius]));
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    grid.buckets[j * dims[0] + i].push(idx as u32);
                }
            }
        }
        grid
    }

    #[inline]
    fn index_of(&self, p: Vec2) -> [usize; 2] {
        let mut out = [0usize; 2];
        for k in 0..2 {
            let t = ((p[k] - self.origin[k]) / self.cell[k]).floor();
            out[k] = if t.is_nan() || t < 0.0 {
                0
            } else {
                (t as usize).min(self.dims[k] - 1)
            };
        }
        out
    }

    #[inline]
    fn candidates(&self, p: Vec2) -> &[u32] {
        let [i, j] = self.index_of(p);
        &self.buckets[j * self.dims[0] + i]
    }
}

/// Serializable description of a [`PerforatedDomain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainLayout {
    pub rect: Rect,
    pub perforations: Vec<Perforation>,
}

impl From<DomainLayout> for PerforatedDomain {
    fn from(l: DomainLayout) -> Self {
        PerforatedDomain::new(l.rect, l.perforations)
    }
}

/// Rectangle minus a finite union of closed disks.
#[derive(Debug, Clone)]
pub struct PerforatedDomain {
    rect: Rect,
    perforations: Vec<Perforation>,
    grid: BucketGrid,
}

impl PartialEq for PerforatedDomain {
    fn eq(&self, other: &Self) -> bool {
        self.rect == other.rect && self.perforations == other.perforations
    }
}

impl PerforatedDomain {
    /// Builds the domain without validating it; see [`validate_configuration`].
    pub fn new(rect: Rect, perforations: Vec<Perforation>) -> Self {
        let grid = BucketGrid::build(&rect, &perforations);
        Self {
            rect,
            perforations,
            grid,
        }
    }

    /// Builds the domain and rejects configurations with any violation.
    pub fn try_new(rect: Rect, perforations: Vec<Perforation>) -> Result<Self, GeometryError> {
        let d = Self::new(rect, perforations);
        let violations = validate_configuration(&d);
        if violations.is_empty() {
            Ok(d)
        } else {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(GeometryError::Invalid(list.join(", ")))
        }
    }

    /// A periodic array of equal disks: `count[k]` disks along axis `k`,
    /// centered in cells of width `spacing[k]` starting at `rect.lo`.
    pub fn periodic_lattice(rect: Rect, count: [usize; 2], radius: f64) -> Self {
        let spacing = [rect.width(0) / count[0] as f64, rect.width(1) / count[1] as f64];
        let mut perforations = Vec::with_capacity(count[0] * count[1]);
        for j in 0..count[1] {
            for i in 0..count[0] {
                let c = [
                    rect.lo[0] + (i as f64 + 0.5) * spacing[0],
                    rect.lo[1] + (j as f64 + 0.5) * spacing[1],
                ];
                perforations.push(Perforation::new(c, radius));
            }
        }
        Self::new(rect, perforations)
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    pub fn layout(&self) -> DomainLayout {
        DomainLayout {
            rect: self.rect,
            perforations: self.perforations.clone(),
        }
    }

    pub fn perforations(&self) -> &[Perforation] {
        &self.perforations
    }

    pub fn min_radius(&self) -> Option<f64> {
        self.perforations.iter().map(|p| p.radius).reduce(f64::min)
    }

    /// Index of the closed perforation containing `p`, if any.
    #[inline]
    pub fn perforation_containing(&self, p: Vec2) -> Option<usize> {
        self.grid
            .candidates(p)
            .iter()
            .map(|&i| i as usize)
            .find(|&i| self.perforations[i].contains_closed(p))
    }

    #[inline]
    fn perforation_strictly_containing(&self, p: Vec2) -> Option<usize> {
        self.grid
            .candidates(p)
            .iter()
            .map(|&i| i as usize)
            .find(|&i| self.perforations[i].contains_strictly(p))
    }

    /// Classifies `p`. Points on any boundary within tolerance are interior.
    pub fn classify_point(&self, p: Vec2) -> Region {
        if !self.rect.contains(p) {
            return Region::OutsideRect;
        }
        match self.perforation_strictly_containing(p) {
            Some(i) => Region::InPerforation(i),
            None => Region::Interior,
        }
    }

    pub fn is_interior(&self, p: Vec2) -> bool {
        self.classify_point(p) == Region::Interior
    }

    /// First crossing of the segment `a -> b` with the rectangle boundary.
    ///
    /// Returns the exit point and its segment parameter `alpha`. The exit
    /// coordinate on the crossed edge is snapped exactly onto the edge.
    pub fn segment_domain_exit(&self, a: Vec2, b: Vec2) -> Option<(Vec2, f64)> {
        let d = sub(b, a);
        if d[0] == 0.0 && d[1] == 0.0 {
            return None;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..2 {
            let edge = if b[k] > self.rect.hi[k] {
                self.rect.hi[k]
            } else if b[k] < self.rect.lo[k] {
                self.rect.lo[k]
            } else {
                continue;
            };
            let t = ((edge - a[k]) / d[k]).clamp(0.0, 1.0);
            if best.is_none_or(|(bt, _, _)| t < bt) {
                best = Some((t, k, edge));
            }
        }
        best.map(|(t, k, edge)| {
            let mut exit = add(a, scale(d, t));
            exit[k] = edge;
            let other = 1 - k;
            exit[other] = exit[other].clamp(self.rect.lo[other], self.rect.hi[other]);
            (exit, t)
        })
    }

    /// Uniform samples on the rectangle minus the perforations, by rejection.
    pub fn sample_collocation<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec2>, GeometryError> {
        let cap = SAMPLING_ATTEMPTS_PER_POINT.saturating_mul(n);
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while out.len() < n {
            if attempts >= cap {
                return Err(GeometryError::DomainNearlyCovered {
                    accepted: out.len(),
                    attempts,
                });
            }
            attempts += 1;
            let p = [
                rng.random_range(self.rect.lo[0]..self.rect.hi[0]),
                rng.random_range(self.rect.lo[1]..self.rect.hi[1]),
            ];
            if self.perforation_containing(p).is_none() {
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// Lists every violated domain invariant. Empty means the domain is valid.
pub fn validate_configuration(d: &PerforatedDomain) -> Vec<Violation> {
    let mut out = Vec::new();
    let rect = d.rect();
    if !rect.is_valid() {
        out.push(Violation::InvalidRect);
    }
    let perfs = d.perforations();
    for (i, p) in perfs.iter().enumerate() {
        if !(p.radius > 0.0) || !p.radius.is_finite() {
            out.push(Violation::NonPositiveRadius(i));
            continue;
        }
        let inside = (0..2).all(|k| {
            p.center[k] - p.radius > rect.lo[k] && p.center[k] + p.radius < rect.hi[k]
        });
        if !inside {
            out.push(Violation::Protrudes(i));
        }
    }
    // Sweep along x1 so the 400-disk lattice does not cost O(n^2) comparisons.
    let mut order: Vec<usize> = (0..perfs.len()).collect();
    order.sort_by(|&a, &b| {
        (perfs[a].center[0] - perfs[a].radius).total_cmp(&(perfs[b].center[0] - perfs[b].radius))
    });
    let max_r = perfs.iter().map(|p| p.radius).fold(0.0, f64::max);
    let mut overlaps = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let pi = &perfs[i];
        for &j in &order[pos + 1..] {
            let pj = &perfs[j];
            if pj.center[0] - pj.radius > pi.center[0] + pi.radius + max_r {
                break;
            }
            if norm(sub(pi.center, pj.center)) <= pi.radius + pj.radius {
                overlaps.push(Violation::Overlap(i.min(j), i.max(j)));
            }
        }
    }
    overlaps.sort_by_key(|v| match v {
        Violation::Overlap(i, j) => (*i, *j),
        _ => (0, 0),
    });
    out.extend(overlaps);
    out
}
