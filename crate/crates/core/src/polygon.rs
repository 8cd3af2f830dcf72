//! Planar convex polygons: halfspace intersection and Euclidean distance.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Feasibility slack used when filtering intersection vertices.
pub const HALFSPACE_SLACK: f64 = 1e-9;

/// Halfspace `{p : ⟨normal, p⟩ ≤ offset}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Halfspace<T: Real> {
    pub normal: Vector2<T>,
    pub offset: T,
}

impl<T: Real> Halfspace<T> {
    pub fn new(normal: Vector2<T>, offset: T) -> Self {
        Halfspace { normal, offset }
    }

    pub fn violation(&self, p: &Vector2<T>) -> T {
        self.normal.dot(p) - self.offset
    }
}

/// Convex polygon with counter-clockwise vertices.
///
/// Degenerate cases (a segment or a single point) are represented with two
/// or one vertex respectively.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon<T: Real> {
    vertices: Vec<Vector2<T>>,
}

impl<T: Real> ConvexPolygon<T> {
    /// Convex hull of arbitrary points.
    pub fn hull(points: &[Vector2<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateGeometry("empty point set".into()));
        }
        Ok(ConvexPolygon {
            vertices: convex_hull(points),
        })
    }

    /// Intersection of halfspaces whose normals positively span the plane.
    pub fn from_halfspaces(hs: &[Halfspace<T>]) -> Result<Self> {
        if hs.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "{} halfspaces cannot bound a planar region",
                hs.len()
            )));
        }
        if !positively_spanning(hs.iter().map(|h| h.normal)) {
            return Err(Error::DegenerateGeometry(
                "halfspace normals do not positively span the plane; intersection unbounded".into(),
            ));
        }
        let scale = hs
            .iter()
            .map(|h| h.offset.abs() / h.normal.norm())
            .fold(T::one(), |a, b| a.max(b));
        let slack = T::lit(HALFSPACE_SLACK) * scale;
        let mut pts = Vec::new();
        for a in 0..hs.len() {
            for b in a + 1..hs.len() {
                if let Some(p) = line_intersection(&hs[a], &hs[b]) {
                    if hs.iter().all(|h| h.violation(&p) <= slack * h.normal.norm()) {
                        pts.push(p);
                    }
                }
            }
        }
        if pts.is_empty() {
            return Err(Error::DegenerateGeometry("halfspace intersection is empty".into()));
        }
        Ok(ConvexPolygon {
            vertices: convex_hull(&pts),
        })
    }

    pub fn vertices(&self) -> &[Vector2<T>] {
        &self.vertices
    }

    pub fn centroid(&self) -> Vector2<T> {
        let n = T::from_usize_lossy(self.vertices.len());
        self.vertices.iter().fold(Vector2::zeros(), |a, v| a + v) / n
    }

    pub fn area(&self) -> T {
        let n = self.vertices.len();
        let mut s = T::zero();
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            s += p.x * q.y - p.y * q.x;
        }
        s * T::lit(0.5)
    }

    /// Point membership with absolute slack.
    pub fn contains(&self, p: &Vector2<T>, slack: T) -> bool {
        match self.vertices.len() {
            1 => (p - self.vertices[0]).norm() <= slack,
            2 => point_segment_distance(p, &self.vertices[0], &self.vertices[1]) <= slack,
            n => (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let e = b - a;
                let len = e.norm();
                // distance to the right of the CCW edge
                (e.x * (p.y - a.y) - e.y * (p.x - a.x)) >= -slack * len
            }),
        }
    }

    /// Edges as vertex pairs; a point yields one degenerate edge.
    fn segments(&self) -> Vec<(Vector2<T>, Vector2<T>)> {
        let n = self.vertices.len();
        if n == 1 {
            return vec![(self.vertices[0], self.vertices[0])];
        }
        if n == 2 {
            return vec![(self.vertices[0], self.vertices[1])];
        }
        (0..n)
            .map(|i| (self.vertices[i], self.vertices[(i + 1) % n]))
            .collect()
    }
}

/// Minimum Euclidean distance between two convex polygons; zero when they
/// intersect or one contains the other.
pub fn polygon_distance<T: Real>(p: &ConvexPolygon<T>, q: &ConvexPolygon<T>) -> Result<T> {
    if p.vertices.is_empty() || q.vertices.is_empty() {
        return Err(Error::DegenerateGeometry("empty polygon".into()));
    }
    if p.contains(&q.vertices[0], T::zero()) || q.contains(&p.vertices[0], T::zero()) {
        return Ok(T::zero());
    }
    let mut best: Option<T> = None;
    for (a, b) in p.segments() {
        for (c, d) in q.segments() {
            let dist = segment_distance(&a, &b, &c, &d);
            best = Some(match best {
                Some(x) if x <= dist => x,
                _ => dist,
            });
        }
    }
    Ok(best.expect("at least one segment pair"))
}

/// True when the directions leave no angular gap of π or more.
pub fn positively_spanning<T: Real>(dirs: impl Iterator<Item = Vector2<T>>) -> bool {
    let mut angles: Vec<T> = dirs
        .filter(|d| d.norm() > T::zero())
        .map(|d| d.y.atan2(d.x))
        .collect();
    if angles.len() < 3 {
        return false;
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let two_pi = T::two_pi();
    let mut max_gap = angles[0] + two_pi - angles[angles.len() - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    max_gap < T::pi() - T::lit(1e-12)
}

fn cross<T: Real>(o: &Vector2<T>, a: &Vector2<T>, b: &Vector2<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; returns CCW vertices with duplicates collapsed.
fn convex_hull<T: Real>(points: &[Vector2<T>]) -> Vec<Vector2<T>> {
    let mut pts: Vec<Vector2<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
    });
    let scale = pts
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(T::one(), |a, b| a.max(b));
    let eps = T::lit(1e-12) * scale;
    pts.dedup_by(|a, b| (*a - *b).norm() <= eps);
    if pts.len() <= 2 {
        return pts;
    }
    let area_eps = eps * scale;
    let mut lower: Vec<Vector2<T>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= area_eps {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<T>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= area_eps {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && (lower[0] - lower[1]).norm() <= eps {
        lower.truncate(1);
    }
    lower
}

fn line_intersection<T: Real>(a: &Halfspace<T>, b: &Halfspace<T>) -> Option<Vector2<T>> {
    let det = a.normal.x * b.normal.y - a.normal.y * b.normal.x;
    let scale = a.normal.norm() * b.normal.norm();
    if det.abs() <= T::lit(1e-12) * scale {
        return None;
    }
    let x = (a.offset * b.normal.y - b.offset * a.normal.y) / det;
    let y = (a.normal.x * b.offset - b.normal.x * a.offset) / det;
    Some(Vector2::new(x, y))
}

pub(crate) fn point_segment_distance<T: Real>(p: &Vector2<T>, a: &Vector2<T>, b: &Vector2<T>) -> T {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= T::zero() {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).max(T::zero()).min(T::one());
    (p - (a + ab * t)).norm()
}

fn segments_cross<T: Real>(a: &Vector2<T>, b: &Vector2<T>, c: &Vector2<T>, d: &Vector2<T>) -> bool {
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    ((d1 > T::zero() && d2 < T::zero()) || (d1 < T::zero() && d2 > T::zero()))
        && ((d3 > T::zero() && d4 < T::zero()) || (d3 < T::zero() && d4 > T::zero()))
}

fn segment_distance<T: Real>(a: &Vector2<T>, b: &Vector2<T>, c: &Vector2<T>, d: &Vector2<T>) -> T {
    if segments_cross(a, b, c, d) {
        return T::zero();
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}
