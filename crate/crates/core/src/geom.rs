//! Planar polygon utilities on `f64` micrometre coordinates.

use crate::linalg::Vec2;

pub type Point = Vec2<f64>;

/// Signed area, positive for counterclockwise polygons.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>() * 0.5
}

pub fn area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

pub fn centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let a = signed_area(poly);
    if a.abs() < 1e-300 {
        let s = poly.iter().fold(Point::zero(), |acc, &p| acc + p);
        return s * (1.0 / n as f64);
    }
    let mut c = Point::zero();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        c = c + (p + q) * p.cross(q);
    }
    c * (1.0 / (6.0 * a))
}

/// Returns the polygon in counterclockwise order.
pub fn to_ccw(mut poly: Vec<Point>) -> Vec<Point> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

pub fn bbox(poly: &[Point]) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poly {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point, eps: f64) -> bool {
    p.x >= a.x.min(b.x) - eps
        && p.x <= a.x.max(b.x) + eps
        && p.y >= a.y.min(b.y) - eps
        && p.y <= a.y.max(b.y) + eps
}

/// Closed-segment intersection test with a small absolute tolerance.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point, eps: f64) -> bool {
    let scale = (b - a).norm().max((d - c).norm()).max(1.0);
    let tol = eps * scale;
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    let sgn = |v: f64| if v > tol { 1 } else if v < -tol { -1 } else { 0 };
    let (s1, s2, s3, s4) = (sgn(o1), sgn(o2), sgn(o3), sgn(o4));
    if s1 * s2 < 0 && s3 * s4 < 0 {
        return true;
    }
    (s1 == 0 && on_segment(a, b, c, eps))
        || (s2 == 0 && on_segment(a, b, d, eps))
        || (s3 == 0 && on_segment(c, d, a, eps))
        || (s4 == 0 && on_segment(c, d, b, eps))
}

/// True when no two edges intersect except adjacent edges at their shared
/// vertex (and adjacent edges do not fold back onto each other).
pub fn is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let eps = 1e-12;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        // Adjacent edge folding back: next vertex lies on this edge's line
        // pointing backwards.
        let c = poly[(i + 2) % n];
        if orient(a, b, c).abs() <= eps * (b - a).norm().max(1.0) * (c - b).norm().max(1.0)
            && (b - a).dot(c - b) < 0.0
        {
            return false;
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d, eps) {
                return false;
            }
        }
    }
    true
}

/// Even-odd point-in-polygon test (boundary points may go either way).
pub fn contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the polygon region (zero inside).
pub fn distance_to(poly: &[Point], p: Point) -> f64 {
    if contains(poly, p) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let ab = b - a;
            let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            (a + ab * t).dist(p)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Keeps the part of `poly` on the side `{p : n·p <= c}`.
/// Exact for convex input; for non-convex input the result is correct as
/// long as the clipped region is connected.
pub fn clip_half_plane(poly: &[Point], normal: Point, c: f64) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (dp, dq) = (normal.dot(p) - c, normal.dot(q) - c);
        if dp <= 0.0 {
            out.push(p);
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    dedup_ring(out, 1e-9)
}

/// Removes consecutive (and wrap-around) near-duplicate vertices.
pub fn dedup_ring(poly: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(out[out.len() - 1]) <= tol {
        out.pop();
    }
    out
}

/// Removes vertices whose neighbours make them collinear.
pub fn drop_collinear(poly: Vec<Point>, tol: f64) -> Vec<Point> {
    let mut p = poly;
    loop {
        let n = p.len();
        if n <= 3 {
            return p;
        }
        let idx = (0..n).find(|&i| {
            let (a, b, c) = (p[(i + n - 1) % n], p[i], p[(i + 1) % n]);
            orient(a, b, c).abs() <= tol * (c - a).norm().max(1e-300) && (b - a).dot(c - b) > 0.0
        });
        match idx {
            Some(i) => {
                p.remove(i);
            }
            None => return p,
        }
    }
}

/// Outward offset of a counterclockwise polygon by `delta` (mitred corners,
/// bevelled beyond a miter ratio of 4).
pub fn offset_polygon(poly: &[Point], delta: f64) -> Vec<Point> {
    if delta == 0.0 {
        return poly.to_vec();
    }
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 4);
    for i in 0..n {
        let prev = poly[(i + n - 1) % n];
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let d0 = (cur - prev).normalized();
        let d1 = (next - cur).normalized();
        // Outward normals of a CCW polygon point to the right of each edge.
        let n0 = Point::new(d0.y, -d0.x);
        let n1 = Point::new(d1.y, -d1.x);
        let bis = n0 + n1;
        let cos_half_sq = 0.5 * (1.0 + n0.dot(n1));
        if cos_half_sq < 1.0 / 16.0 {
            out.push(cur + n0 * delta);
            out.push(cur + n1 * delta);
        } else {
            out.push(cur + bis * (delta / (2.0 * cos_half_sq)));
        }
    }
    dedup_ring(out, 1e-9)
}

/// Ear-clipping triangulation of a simple polygon (any orientation).
pub fn triangulate(poly: &[Point]) -> Vec<[Point; 3]> {
    let pts = to_ccw(poly.to_vec());
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len().saturating_sub(2));
    let mut guard = 0;
    while idx.len() > 3 && guard < 10 * pts.len() * pts.len() {
        guard += 1;
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if orient(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ia || j == ib || j == ic {
                    return false;
                }
                let p = pts[j];
                orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
            });
            if !blocked {
                tris.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        let (a, b, c) = (pts[idx[0]], pts[idx[1]], pts[idx[2]]);
        if orient(a, b, c) > 0.0 {
            tris.push([a, b, c]);
        }
    }
    tris
}

/// Intersection area of two convex counterclockwise polygons.
pub fn convex_intersection_area(a: &[Point], b: &[Point]) -> f64 {
    let mut clipped = a.to_vec();
    let n = b.len();
    for i in 0..n {
        if clipped.len() < 3 {
            return 0.0;
        }
        let (p, q) = (b[i], b[(i + 1) % n]);
        let e = q - p;
        let outward = Point::new(e.y, -e.x);
        clipped = clip_half_plane(&clipped, outward, outward.dot(p));
    }
    if clipped.len() < 3 {
        0.0
    } else {
        area(&clipped)
    }
}

/// Area of overlap between two simple polygons.
pub fn overlap_area(a: &[Point], b: &[Point]) -> f64 {
    let (alo, ahi) = bbox(a);
    let (blo, bhi) = bbox(b);
    if alo.x >= bhi.x || blo.x >= ahi.x || alo.y >= bhi.y || blo.y >= ahi.y {
        return 0.0;
    }
    let ta = triangulate(a);
    let tb = triangulate(b);
    let mut total = 0.0;
    for s in &ta {
        let (slo, shi) = bbox(s);
        for t in &tb {
            let (tlo, thi) = bbox(t);
            if slo.x >= thi.x || tlo.x >= shi.x || slo.y >= thi.y || tlo.y >= shi.y {
                continue;
            }
            total += convex_intersection_area(s, t);
        }
    }
    total
}

/// Rigid transform: rotate by `rotation` (radians, CCW) then translate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transform {
    pub tx: f64,
    pub ty: f64,
    /// Degrees, counterclockwise.
    pub rotation_deg: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform { tx: 0.0, ty: 0.0, rotation_deg: 0.0 };

    pub fn new(translation: Point, rotation_deg: f64) -> Self {
        Self { tx: translation.x, ty: translation.y, rotation_deg }
    }

    fn sin_cos(&self) -> (f64, f64) {
        // Exact values at multiples of 90 degrees keep axis-aligned layouts exact.
        let r = self.rotation_deg.rem_euclid(360.0);
        for (deg, s, c) in [(0.0, 0.0, 1.0), (90.0, 1.0, 0.0), (180.0, 0.0, -1.0), (270.0, -1.0, 0.0)] {
            if (r - deg).abs() < 1e-12 || (r - deg - 360.0).abs() < 1e-12 {
                return (s, c);
            }
        }
        r.to_radians().sin_cos()
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.sin_cos();
        Point::new(c * p.x - s * p.y + self.tx, s * p.x + c * p.y + self.ty)
    }

    pub fn apply_dir(&self, d: Point) -> Point {
        let (s, c) = self.sin_cos();
        Point::new(c * d.x - s * d.y, s * d.x + c * d.y)
    }
}
