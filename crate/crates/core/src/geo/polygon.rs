//! Planar polygon and segment primitives used by the tracer and the
//! environment statistics.

use super::Point2;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    pub fn of_points(points: &[Point2]) -> Option<Self> {
        let first = *points.first()?;
        let mut bb = BBox { min: first, max: first };
        for p in &points[1..] {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min: Point2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    /// Parameter interval `[t0, t1]` of the segment `a + t(b - a)`, `t ∈ [0, 1]`,
    /// that lies inside the box (Liang–Barsky clipping).
    pub fn clip_segment(&self, a: Point2, b: Point2) -> Option<(f64, f64)> {
        let d = b - a;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        let checks = [
            (-d.x, a.x - self.min.x),
            (d.x, self.max.x - a.x),
            (-d.y, a.y - self.min.y),
            (d.y, self.max.y - a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point2]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

pub fn area(ring: &[Point2]) -> f64 {
    signed_area(ring).abs()
}

/// Area centroid; falls back to the vertex mean for degenerate rings.
pub fn centroid(ring: &[Point2]) -> Point2 {
    let n = ring.len();
    let a = signed_area(ring);
    if n < 3 || a.abs() < 1e-12 {
        let (sx, sy) = ring.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        return Point2::new(sx / n.max(1) as f64, sy / n.max(1) as f64);
    }
    // Shift to the first vertex to limit cancellation with large projected coordinates.
    let o = ring[0];
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = ring[i] - o;
        let q = ring[(i + 1) % n] - o;
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point2::new(o.x + cx / (6.0 * a), o.y + cy / (6.0 * a))
}

/// Even-odd point in polygon test.
pub fn contains_point(ring: &[Point2], p: Point2) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = ring[i];
        let b = ring[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, including touching and collinear overlap.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Whether the closed segment `a`–`b` meets the polygon (boundary or interior).
pub fn segment_intersects_polygon(ring: &[Point2], a: Point2, b: Point2) -> bool {
    if contains_point(ring, a) || contains_point(ring, b) {
        return true;
    }
    let n = ring.len();
    (0..n).any(|i| segments_intersect(a, b, ring[i], ring[(i + 1) % n]))
}

/// Returns the index pair of the first two non-adjacent edges that cross, if any.
pub fn find_self_intersection(ring: &[Point2]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Minimum distance from `p` to the polygon (zero if inside).
pub fn distance_to_polygon(ring: &[Point2], p: Point2) -> f64 {
    if contains_point(ring, p) {
        return 0.0;
    }
    let n = ring.len();
    (0..n)
        .map(|i| distance_to_segment(p, ring[i], ring[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

pub fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}

/// Exact area of the intersection between a simple polygon and a disk.
///
/// Sums, over every edge, the signed area of the triangle (center, p, q)
/// intersected with the disk.
pub fn disk_intersection_area(ring: &[Point2], center: Point2, radius: f64) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = ring[i] - center;
        let q = ring[(i + 1) % n] - center;
        acc += triangle_disk_area(p, q, radius);
    }
    acc.abs()
}

/// Signed area of triangle (origin, a, b) ∩ disk(origin, r).
fn triangle_disk_area(a: Point2, b: Point2, r: f64) -> f64 {
    let r2 = r * r;
    let da = a.dot(a);
    let db = b.dot(b);
    let sector = |u: Point2, v: Point2| 0.5 * r2 * (u.cross(v)).atan2(u.dot(v));
    let tri = |u: Point2, v: Point2| 0.5 * u.cross(v);

    if da <= r2 && db <= r2 {
        return tri(a, b);
    }
    // solve |a + t(b - a)| = r
    let d = b - a;
    let qa = d.dot(d);
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * a.dot(d);
    let qc = da - r2;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return sector(a, b);
    }
    let sq = disc.sqrt();
    let t1 = (-qb - sq) / (2.0 * qa);
    let t2 = (-qb + sq) / (2.0 * qa);
    if da <= r2 {
        // a inside, b outside: exit at t2
        let m = a + d * t2;
        return tri(a, m) + sector(m, b);
    }
    if db <= r2 {
        // a outside, b inside: enter at t1
        let m = a + d * t1;
        return sector(a, m) + tri(m, b);
    }
    if t1 >= 1.0 || t2 <= 0.0 || !(0.0..=1.0).contains(&t1) {
        return sector(a, b);
    }
    let m1 = a + d * t1;
    let m2 = a + d * t2.min(1.0);
    sector(a, m1) + tri(m1, m2) + sector(m2, b)
}
