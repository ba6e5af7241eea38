//! Parabolic-arc curve segments extracted from ridge traces.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::config::AlgorithmSettings;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::plane::Plane;
use crate::ridges::{EnergyMap, Scale};

pub const MIN_SUPPORT: usize = 5;

/// Arc `vertex + t*u + a*t^2*v` for `t` in `[t_min, t_max]`, where
/// `u = (cos theta, sin theta)` and `v` is `u` rotated by +90 degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSegment {
    pub z: u32,
    pub scale: Scale,
    pub vertex: Point,
    pub theta: f64,
    pub a: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub support: Vec<(u16, u16)>,
    pub rms_residual: f64,
}

impl CurveSegment {
    pub fn axis(&self) -> Point {
        Point::from_angle(self.theta)
    }

    pub fn point_at(&self, t: f64) -> Point {
        let u = self.axis();
        self.vertex + u * t + u.perp() * (self.a * t * t)
    }

    pub fn midpoint(&self) -> Point {
        self.point_at(0.5 * (self.t_min + self.t_max))
    }

    pub fn arc_length(&self) -> f64 {
        parabola_arc_length(self.a, self.t_min, self.t_max)
    }

    /// Unit normal pointing to the concave side; zero for a straight segment.
    pub fn concave_normal(&self) -> Point {
        if self.a == 0.0 {
            return Point::ZERO;
        }
        let t = 0.5 * (self.t_min + self.t_max);
        let u = self.axis();
        let tangent = u + u.perp() * (2.0 * self.a * t);
        let n = tangent.perp().normalized();
        if self.a > 0.0 {
            n
        } else {
            -n
        }
    }

    pub fn curvature_at_apex(&self) -> f64 {
        2.0 * self.a
    }
}

/// Length of `v = a u^2` between `t0` and `t1`.
pub fn parabola_arc_length(a: f64, t0: f64, t1: f64) -> f64 {
    if a == 0.0 {
        return (t1 - t0).abs();
    }
    let f = |t: f64| {
        let s = 2.0 * a * t;
        (s * (1.0 + s * s).sqrt() + s.asinh()) / (4.0 * a)
    };
    (f(t1) - f(t0)).abs()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    TooFew(usize),
    Degenerate,
    Residual(f64),
}

/// Fit result in chain coordinates, before pixel support is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcFit {
    pub vertex: Point,
    pub theta: f64,
    pub a: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub rms_residual: f64,
}

struct FrameFit {
    alpha: f64,
    beta: f64,
    gamma: f64,
    sse: f64,
}

fn frame_fit(pts: &[Point], w: &[f64], theta: f64) -> FrameFit {
    let (c, s) = (theta.cos(), theta.sin());
    // moments of u^k and v * u^k
    let mut m = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for (p, &wi) in pts.iter().zip(w) {
        let u = p.x * c + p.y * s;
        let v = -p.x * s + p.y * c;
        let mut uk = wi;
        for (k, mk) in m.iter_mut().enumerate() {
            *mk += uk;
            if k < 3 {
                r[k] += uk * v;
            }
            uk *= u;
        }
    }
    // normal equations for (gamma, beta, alpha)
    let a = [[m[0], m[1], m[2]], [m[1], m[2], m[3]], [m[2], m[3], m[4]]];
    let Some(sol) = solve3(a, r) else {
        return FrameFit {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            sse: f64::INFINITY,
        };
    };
    let (gamma, beta, alpha) = (sol[0], sol[1], sol[2]);
    let sse = pts
        .iter()
        .zip(w)
        .map(|(p, &wi)| {
            let u = p.x * c + p.y * s;
            let v = -p.x * s + p.y * c;
            let e = v - (alpha * u * u + beta * u + gamma);
            wi * e * e
        })
        .sum();
    FrameFit {
        alpha,
        beta,
        gamma,
        sse,
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let scale = a[0][0] * a[1][1] * a[2][2];
    if !(d.abs() > 1e-12 * scale.abs()) {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *o = det(&m) / d;
    }
    Some(out)
}

fn principal_axis(pts: &[Point], w: &[f64]) -> f64 {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, &wi) in pts.iter().zip(w) {
        sxx += wi * p.x * p.x;
        sxy += wi * p.x * p.y;
        syy += wi * p.y * p.y;
    }
    0.5 * (2.0 * sxy).atan2(sxx - syy)
}

const SEARCH_HALF_WIDTH: f64 = PI / 6.0;
const SEARCH_TOL: f64 = 1e-9;
const LINE_SAGITTA: f64 = 1e-6;

/// Weighted least-squares parabola through `points`. The axis is searched
/// within 30 degrees of `theta_hint` (or of the principal axis) and is
/// oriented so that `t` increases from the first point to the last.
pub fn fit_parabola(
    points: &[Point],
    weights: &[f64],
    theta_hint: Option<f64>,
    tol: f64,
) -> std::result::Result<ArcFit, Rejection> {
    if points.len() < MIN_SUPPORT {
        return Err(Rejection::TooFew(points.len()));
    }
    let mut w: Vec<f64> = weights.iter().map(|&v| v.max(0.0)).collect();
    w.resize(points.len(), 1.0);
    let mut wsum: f64 = w.iter().sum();
    if !(wsum > 0.0) {
        w.iter_mut().for_each(|v| *v = 1.0);
        wsum = points.len() as f64;
    }
    let centre = points
        .iter()
        .zip(&w)
        .fold(Point::ZERO, |acc, (p, &wi)| acc + *p * wi)
        * (1.0 / wsum);
    let local: Vec<Point> = points.iter().map(|&p| p - centre).collect();
    let spread = local.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if spread < 1e-9 {
        return Err(Rejection::Degenerate);
    }

    let mut theta0 = theta_hint.unwrap_or_else(|| principal_axis(&local, &w));
    let run = points[points.len() - 1] - points[0];
    if Point::from_angle(theta0).dot(run) < 0.0 {
        theta0 += PI;
    }

    let objective = |t: f64| frame_fit(&local, &w, t).sse;
    let theta = golden_section(objective, theta0 - SEARCH_HALF_WIDTH, theta0 + SEARCH_HALF_WIDTH);
    let fit = frame_fit(&local, &w, theta);
    if !fit.sse.is_finite() {
        return Err(Rejection::Degenerate);
    }
    let rms = (fit.sse / wsum).sqrt();
    if rms > tol {
        return Err(Rejection::Residual(rms));
    }

    let axis = Point::from_angle(theta);
    let us: Vec<f64> = local.iter().map(|p| p.dot(axis)).collect();
    let (u_lo, u_hi) = us.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| {
        (lo.min(u), hi.max(u))
    });
    let half_span = 0.5 * (u_hi - u_lo);
    let sagitta = fit.alpha.abs() * half_span * half_span;

    if sagitta < LINE_SAGITTA {
        let dir = (axis + axis.perp() * fit.beta).normalized();
        let origin = centre + axis.perp() * fit.gamma;
        let ts: Vec<f64> = points.iter().map(|&p| (p - origin).dot(dir)).collect();
        let (t_min, t_max) = min_max(&ts);
        return Ok(ArcFit {
            vertex: origin,
            theta: dir.y.atan2(dir.x).rem_euclid(TAU),
            a: 0.0,
            t_min,
            t_max,
            rms_residual: rms,
        });
    }

    let u0 = -fit.beta / (2.0 * fit.alpha);
    let v0 = fit.gamma - fit.beta * fit.beta / (4.0 * fit.alpha);
    let vertex = centre + axis * u0 + axis.perp() * v0;
    let ts: Vec<f64> = us.iter().map(|u| u - u0).collect();
    let (t_min, t_max) = min_max(&ts);
    Ok(ArcFit {
        vertex,
        theta: theta.rem_euclid(TAU),
        a: fit.alpha,
        t_min,
        t_max,
        rms_residual: rms,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Minimizes `f` over `[lo, hi]`; on equal values the lower argument wins.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > SEARCH_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi]
        .into_iter()
        .map(|t| (f(t), t))
        .fold((f64::INFINITY, mid), |best, cur| if cur.0 < best.0 { cur } else { best })
        .1
}

const OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

fn on(mask: &Plane<bool>, x: isize, y: isize) -> bool {
    x >= 0
        && y >= 0
        && (x as usize) < mask.width()
        && (y as usize) < mask.height()
        && mask.get(x as usize, y as usize)
}

fn neighbour_count(mask: &Plane<bool>, x: usize, y: usize) -> usize {
    OFFSETS
        .iter()
        .filter(|(dx, dy)| on(mask, x as isize + dx, y as isize + dy))
        .count()
}

/// Ring of the 8 neighbours in circular order.
const RING: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// True when the set neighbours of `(x, y)` stay 8-connected without it.
fn neighbours_connected(mask: &Plane<bool>, x: usize, y: usize) -> bool {
    let set: Vec<(isize, isize)> = RING
        .iter()
        .copied()
        .filter(|(dx, dy)| on(mask, x as isize + dx, y as isize + dy))
        .collect();
    if set.is_empty() {
        return true;
    }
    let mut seen = vec![false; set.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..set.len() {
            if !seen[j] && (set[i].0 - set[j].0).abs() <= 1 && (set[i].1 - set[j].1).abs() <= 1 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Removes corner pixels of staircase runs so that traces are 8-thin.
fn thin_staircases(mask: &mut Plane<bool>) {
    loop {
        let mut changed = false;
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if !mask.get(x, y) {
                    continue;
                }
                let n = neighbour_count(mask, x, y);
                if !(2..=3).contains(&n) {
                    continue;
                }
                let (xi, yi) = (x as isize, y as isize);
                let horiz = on(mask, xi - 1, yi) || on(mask, xi + 1, yi);
                let vert = on(mask, xi, yi - 1) || on(mask, xi, yi + 1);
                if horiz && vert && neighbours_connected(mask, x, y) {
                    mask.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

pub type Chain = Vec<(usize, usize)>;

/// 8-connected chains of ridge pixels, split at junctions and ordered end
/// to end. Chains shorter than five pixels are dropped.
pub fn trace_ridges(mask: &Plane<bool>) -> Vec<Chain> {
    let mut m = mask.clone();
    thin_staircases(&mut m);
    let (w, h) = (m.width(), m.height());
    let junctions: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| m.get(x, y) && neighbour_count(&m, x, y) > 2)
        .collect();
    for (x, y) in junctions {
        m.set(x, y, false);
    }

    let mut visited = Plane::new(w, h, false);
    let mut chains = Vec::new();
    let walk = |start: (usize, usize), visited: &mut Plane<bool>| -> Chain {
        let mut chain = vec![start];
        visited.set(start.0, start.1, true);
        let mut cur = start;
        loop {
            let next = OFFSETS.iter().find_map(|(dx, dy)| {
                let (nx, ny) = (cur.0 as isize + dx, cur.1 as isize + dy);
                (on(&m, nx, ny) && !visited.get(nx as usize, ny as usize))
                    .then_some((nx as usize, ny as usize))
            });
            match next {
                Some(p) => {
                    visited.set(p.0, p.1, true);
                    chain.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        chain
    };

    // open chains from their raster-first endpoint, then closed loops
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) && !visited.get(x, y) && neighbour_count(&m, x, y) <= 1 {
                chains.push(walk((x, y), &mut visited));
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) && !visited.get(x, y) {
                chains.push(walk((x, y), &mut visited));
            }
        }
    }
    chains.retain(|c| c.len() >= MIN_SUPPORT);
    chains
}

/// Mean tangent direction of the chain from the doubled-angle average.
fn mean_orientation(chain: &[(usize, usize)], orientation: &Plane<f32>, weights: &[f64]) -> Option<f64> {
    let (mut c, mut s) = (0.0, 0.0);
    for (&(x, y), &w) in chain.iter().zip(weights) {
        let t = 2.0 * orientation.get(x, y) as f64;
        c += w * t.cos();
        s += w * t.sin();
    }
    (c.hypot(s) > 1e-12).then(|| 0.5 * s.atan2(c))
}

/// Ridge pixel moved to the strength peak along its normal, from a
/// three-point parabola; the shift is clamped to half a pixel.
fn subpixel(map: &EnergyMap, x: usize, y: usize) -> Point {
    let p = Point::new(x as f64, y as f64);
    let n = Point::from_angle(map.orientation.get(x, y) as f64).perp();
    let s0 = map.strength.get(x, y) as f64;
    let sp = map.strength.sample(p.x + n.x, p.y + n.y);
    let sm = map.strength.sample(p.x - n.x, p.y - n.y);
    let curv = sp - 2.0 * s0 + sm;
    if curv >= 0.0 {
        return p;
    }
    let off = (0.5 * (sm - sp) / curv).clamp(-0.5, 0.5);
    p + n * off
}

/// Fits arcs to `chain`, bisecting pieces that fit badly or run longer than
/// `curve_max_len`. Pieces shorter than `curve_min_len` are dropped.
pub fn split_and_fit(chain: &[(usize, usize)], map: &EnergyMap, settings: &AlgorithmSettings) -> Vec<CurveSegment> {
    let mut out = Vec::new();
    split_rec(chain, map, settings, &mut out);
    out
}

fn split_rec(chain: &[(usize, usize)], map: &EnergyMap, settings: &AlgorithmSettings, out: &mut Vec<CurveSegment>) {
    if chain.len() < MIN_SUPPORT {
        return;
    }
    let polyline: f64 = chain
        .windows(2)
        .map(|p| {
            let (dx, dy) = (p[1].0 as f64 - p[0].0 as f64, p[1].1 as f64 - p[0].1 as f64);
            dx.hypot(dy)
        })
        .sum();
    if polyline <= settings.curve_min_len {
        return;
    }
    let points: Vec<Point> = chain.iter().map(|&(x, y)| subpixel(map, x, y)).collect();
    let weights: Vec<f64> = chain.iter().map(|&(x, y)| map.strength.get(x, y) as f64).collect();
    let hint = mean_orientation(chain, &map.orientation, &weights);
    let fit = fit_parabola(&points, &weights, hint, settings.curve_fit_tol);

    if let Ok(f) = &fit {
        let len = parabola_arc_length(f.a, f.t_min, f.t_max);
        if len <= settings.curve_max_len {
            if len > settings.curve_min_len && f.t_min < f.t_max {
                out.push(CurveSegment {
                    z: map.z,
                    scale: map.scale,
                    vertex: f.vertex,
                    theta: f.theta,
                    a: f.a,
                    t_min: f.t_min,
                    t_max: f.t_max,
                    support: chain.iter().map(|&(x, y)| (x as u16, y as u16)).collect(),
                    rms_residual: f.rms_residual,
                });
            }
            return;
        }
    }
    let mid = chain.len() / 2;
    split_rec(&chain[..mid], map, settings, out);
    split_rec(&chain[mid..], map, settings, out);
}

/// All segments of one energy map, in trace order.
pub fn extract_curves(map: &EnergyMap, settings: &AlgorithmSettings) -> Vec<CurveSegment> {
    trace_ridges(&map.ridge_mask)
        .iter()
        .flat_map(|c| split_and_fit(c, map, settings))
        .collect()
}

const CRVS_MAGIC: &[u8; 4] = b"CRVS";
const CRVS_VERSION: u32 = 1;

pub fn encode_curves(segments: &[CurveSegment]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CRVS_MAGIC).u32(CRVS_VERSION).u32(segments.len() as u32);
    for s in segments {
        w.f64(s.vertex.x)
            .f64(s.vertex.y)
            .f64(s.theta)
            .f64(s.a)
            .f64(s.t_min)
            .f64(s.t_max)
            .f64(s.rms_residual)
            .u32(s.support.len() as u32);
        for &(x, y) in &s.support {
            w.u16(x).u16(y);
        }
    }
    w.finish()
}

pub fn decode_curves(bytes: &[u8], z: u32, scale: Scale, path: &Path) -> Result<Vec<CurveSegment>> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(CRVS_MAGIC, CRVS_VERSION)?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let vertex = Point::new(r.f64()?, r.f64()?);
        let theta = r.f64()?;
        let a = r.f64()?;
        let t_min = r.f64()?;
        let t_max = r.f64()?;
        let rms_residual = r.f64()?;
        let n = r.u32()? as usize;
        let mut support = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            support.push((r.u16()?, r.u16()?));
        }
        out.push(CurveSegment {
            z,
            scale,
            vertex,
            theta,
            a,
            t_min,
            t_max,
            support,
            rms_residual,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn read_curves(path: &Path, z: u32, scale: Scale) -> Result<Vec<CurveSegment>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_curves(&bytes, z, scale, path)
}

/// Support pixels in gray, fitted arcs in white, on black.
pub fn curve_visualization(width: usize, height: usize, segments: &[CurveSegment]) -> image::GrayImage {
    let mut img = image::GrayImage::new(width as u32, height as u32);
    for s in segments {
        for &(x, y) in &s.support {
            if (x as usize) < width && (y as usize) < height {
                img.put_pixel(x as u32, y as u32, image::Luma([110]));
            }
        }
        let steps = (s.arc_length() * 4.0).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = s.t_min + (s.t_max - s.t_min) * k as f64 / steps as f64;
            let p = s.point_at(t);
            let (x, y) = (p.x.round(), p.y.round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
                img.put_pixel(x as u32, y as u32, image::Luma([255]));
            }
        }
    }
    img
}
