//! Planar points and closed-polygon helpers shared by the snake, validation
//! and mesh stages.
//!
//! Coordinates are pixel coordinates with the centre of pixel `(i, j)` at
//! `(i, j)`. "Positively oriented" means a positive shoelace area computed on
//! the raw `(x, y)` values.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Point::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Point::ZERO
        }
    }

    /// Rotation by +90 degrees in raw coordinates: `(x, y) -> (-y, x)`.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Signed shoelace area of a closed polygon.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        acc += p.cross(q);
    }
    0.5 * acc
}

pub fn area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

pub fn perimeter(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].distance(poly[(i + 1) % n])).sum()
}

/// Area centroid; falls back to the vertex mean for degenerate polygons.
pub fn centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let a = signed_area(poly);
    if n < 3 || a.abs() < 1e-12 {
        let s = poly.iter().fold(Point::ZERO, |acc, &p| acc + p);
        return s * (1.0 / n.max(1) as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let c = p.cross(q);
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    Point::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Returns the polygon with positive orientation, reversing it if needed.
pub fn positively_oriented(mut poly: Vec<Point>) -> Vec<Point> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Resamples a closed polygon to `count` points evenly spaced by arc length,
/// starting at the first vertex.
pub fn resample_closed(poly: &[Point], count: usize) -> Vec<Point> {
    let n = poly.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let total = perimeter(poly);
    if n == 1 || total <= 0.0 {
        return vec![poly[0]; count];
    }
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut edge = 0usize;
    let mut edge_start = 0.0;
    let mut edge_len = poly[0].distance(poly[1 % n]);
    for k in 0..count {
        let target = k as f64 * step;
        while edge_start + edge_len < target && edge < n - 1 {
            edge_start += edge_len;
            edge += 1;
            edge_len = poly[edge].distance(poly[(edge + 1) % n]);
        }
        let t = if edge_len > 0.0 {
            ((target - edge_start) / edge_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(poly[edge].lerp(poly[(edge + 1) % n], t));
    }
    out
}

/// Points spaced `spacing` apart along the closed polygon boundary.
pub fn boundary_samples(poly: &[Point], spacing: f64) -> Vec<Point> {
    let total = perimeter(poly);
    let count = ((total / spacing).round() as usize).max(poly.len().min(3)).max(1);
    resample_closed(poly, count)
}

/// Proper intersection point of segments `p1-p2` and `q1-q2`, if any.
pub fn segment_intersection(p1: Point, p2: Point, q1: Point, q2: Point) -> Option<Point> {
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = r.cross(s);
    if denom.abs() < 1e-12 {
        return None;
    }
    let qp = q1 - p1;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0 {
        Some(p1 + r * t)
    } else {
        None
    }
}

/// First pair of crossing, non-adjacent edges `(i, j)` with `i < j`.
pub fn find_self_intersection(poly: &[Point]) -> Option<(usize, usize, Point)> {
    let n = poly.len();
    if n < 4 {
        return None;
    }
    for i in 0..n {
        let a1 = poly[i];
        let a2 = poly[(i + 1) % n];
        let (ax0, ax1) = (a1.x.min(a2.x), a1.x.max(a2.x));
        let (ay0, ay1) = (a1.y.min(a2.y), a1.y.max(a2.y));
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let b1 = poly[j];
            let b2 = poly[(j + 1) % n];
            if b1.x.max(b2.x) < ax0
                || b1.x.min(b2.x) > ax1
                || b1.y.max(b2.y) < ay0
                || b1.y.min(b2.y) > ay1
            {
                continue;
            }
            if let Some(p) = segment_intersection(a1, a2, b1, b2) {
                return Some((i, j, p));
            }
        }
    }
    None
}

/// Removes self-intersection loops. At each crossing the shorter of the two
/// loops is discarded and the crossing point kept.
pub fn untangle(mut poly: Vec<Point>) -> Vec<Point> {
    let mut guard = poly.len();
    while let Some((i, j, p)) = find_self_intersection(&poly) {
        let n = poly.len();
        // Loop A: vertices i+1..=j. Loop B: the rest.
        let inner = j - i;
        if inner <= n - inner {
            let mut next = Vec::with_capacity(n - inner + 1);
            next.extend_from_slice(&poly[..=i]);
            next.push(p);
            next.extend_from_slice(&poly[j + 1..]);
            poly = next;
        } else {
            let mut next = Vec::with_capacity(inner + 1);
            next.push(p);
            next.extend_from_slice(&poly[i + 1..=j]);
            poly = next;
        }
        if poly.len() < 3 || guard == 0 {
            break;
        }
        guard -= 1;
    }
    poly
}

pub fn is_simple(poly: &[Point]) -> bool {
    find_self_intersection(poly).is_none()
}

/// Even-odd point-in-polygon test.
pub fn contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let a = poly[i];
        let b = poly[j];
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

/// Distance from `p` to the closest polygon edge.
pub fn distance_to_boundary(poly: &[Point], p: Point) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let ab = b - a;
        let len2 = ab.dot(ab);
        let t = if len2 > 0.0 {
            ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min(p.distance(a + ab * t));
    }
    best
}

/// Inclusive integer bounding box `(x0, y0, x1, y1)` of the pixel centres
/// that can fall inside the polygon.
pub fn pixel_bounds(poly: &[Point]) -> (i64, i64, i64, i64) {
    let mut x0 = f64::INFINITY;
    let mut y0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for p in poly {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (
        x0.ceil() as i64,
        y0.ceil() as i64,
        x1.floor() as i64,
        y1.floor() as i64,
    )
}

/// Pixel mask of a polygon interior over its own bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterMask {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl RasterMask {
    pub fn empty() -> Self {
        RasterMask {
            x0: 0,
            y0: 0,
            width: 0,
            height: 0,
            bits: Vec::new(),
        }
    }

    pub fn get(&self, x: i64, y: i64) -> bool {
        if x < self.x0 || y < self.y0 {
            return false;
        }
        let (lx, ly) = ((x - self.x0) as usize, (y - self.y0) as usize);
        lx < self.width && ly < self.height && self.bits[ly * self.width + lx]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.bits.iter().enumerate().filter_map(move |(k, &b)| {
            b.then(|| {
                (
                    self.x0 + (k % self.width) as i64,
                    self.y0 + (k / self.width) as i64,
                )
            })
        })
    }
}

/// Scanline rasterization: a pixel is inside when its centre is inside.
pub fn rasterize(poly: &[Point]) -> RasterMask {
    if poly.len() < 3 {
        return RasterMask::empty();
    }
    let (x0, y0, x1, y1) = pixel_bounds(poly);
    if x1 < x0 || y1 < y0 {
        return RasterMask::empty();
    }
    let width = (x1 - x0 + 1) as usize;
    let height = (y1 - y0 + 1) as usize;
    let mut bits = vec![false; width * height];
    let n = poly.len();
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..height {
        let y = (y0 + row as i64) as f64;
        xs.clear();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let start = pair[0].ceil() as i64;
            // strictly left of the exit crossing
            let mut end = pair[1].floor() as i64;
            if end as f64 == pair[1] {
                end -= 1;
            }
            for x in start.max(x0)..=end.min(x1) {
                bits[row * width + (x - x0) as usize] = true;
            }
        }
    }
    RasterMask {
        x0,
        y0,
        width,
        height,
        bits,
    }
}

/// Drops repeated vertices and vertices lying on the line through their
/// neighbours.
pub fn remove_collinear(poly: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::with_capacity(poly.len());
    for &p in poly {
        if pts.last().is_none_or(|q: &Point| q.distance(p) > 1e-9) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && pts[0].distance(pts[pts.len() - 1]) <= 1e-9 {
        pts.pop();
    }
    loop {
        let n = pts.len();
        if n < 3 {
            return pts;
        }
        let mut kept = Vec::with_capacity(n);
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            let c = (pts[i] - prev).cross(next - pts[i]);
            if c.abs() > 1e-9 * (1.0 + (pts[i] - prev).norm() * (next - pts[i]).norm()) {
                kept.push(pts[i]);
            }
        }
        if kept.len() == n {
            return kept;
        }
        pts = kept;
    }
}
