//! Hessian ridge detection and per-scale energy maps.
//!
//! The Hessian is computed with separable Gaussian-derivative passes and
//! scale-normalized by `sigma^2`. Every pass pairs mirrored taps, so a 90
//! degree rotation of the input rotates the Hessian field exactly.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::config::AlgorithmSettings;
use crate::error::{Error, Result};
use crate::imaging::Slice;
use crate::plane::{filter_cols, filter_rows, Kernel, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scale {
    Small,
    Large,
}

impl Scale {
    pub const BOTH: [Scale; 2] = [Scale::Small, Scale::Large];

    pub fn tag(self) -> u8 {
        match self {
            Scale::Small => 0,
            Scale::Large => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Scale> {
        match t {
            0 => Some(Scale::Small),
            1 => Some(Scale::Large),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Small => "small",
            Scale::Large => "large",
        }
    }

    pub fn sigma(self, settings: &AlgorithmSettings) -> f64 {
        match self {
            Scale::Small => settings.scale_small,
            Scale::Large => settings.scale_large,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Second-derivative field `[[xx, xy], [xy, yy]]`, one entry per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianField {
    pub xx: Plane<f32>,
    pub xy: Plane<f32>,
    pub yy: Plane<f32>,
}

fn kernel_radius(sigma: f64) -> usize {
    (4.0 * sigma).ceil().max(1.0) as usize
}

/// Scale-normalized Hessian at scale `sigma`.
pub fn hessian(pixels: &Plane<f32>, sigma: f64) -> HessianField {
    let r = kernel_radius(sigma);
    let g = Kernel::gaussian(sigma, r);
    let d1 = Kernel::gaussian_d1(sigma, r);
    let d2 = Kernel::gaussian_d2(sigma, r);

    // derivative pass first, smoothing pass second
    let xx = filter_cols(&filter_rows(pixels, &d2), &g);
    let yy = filter_rows(&filter_cols(pixels, &d2), &g);
    let xy_a = filter_cols(&filter_rows(pixels, &d1), &d1);
    let xy_b = filter_rows(&filter_cols(pixels, &d1), &d1);

    let norm = (sigma * sigma) as f32;
    let xy = Plane::from_vec(
        pixels.width(),
        pixels.height(),
        xy_a.data()
            .iter()
            .zip(xy_b.data())
            .map(|(a, b)| 0.5 * (a + b) * norm)
            .collect(),
    );
    HessianField {
        xx: xx.map(|v| v * norm),
        xy,
        yy: yy.map(|v| v * norm),
    }
}

/// Per-pixel membrane evidence at one analysis scale.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMap {
    pub z: u32,
    pub scale: Scale,
    pub strength: Plane<f32>,
    /// Ridge tangent direction in `[0, pi)`.
    pub orientation: Plane<f32>,
    /// Signed, 1/px, relative to the tangent direction in `orientation`.
    pub curvature: Plane<f32>,
    pub ridge_mask: Plane<bool>,
}

impl EnergyMap {
    pub fn width(&self) -> usize {
        self.strength.width()
    }

    pub fn height(&self) -> usize {
        self.strength.height()
    }
}

struct Eigen {
    strength: f32,
    /// Unit tangent direction as a doubled angle `(cos 2t, sin 2t)`.
    c2: f32,
    s2: f32,
    /// NMS direction index for the normal, 0..4.
    normal_dir: u8,
}

fn eigen(a: f32, b: f32, c: f32, polarity: f32) -> Eigen {
    let half_tr = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let d = (half_diff * half_diff + b * b).sqrt();
    // |lambda+| >= |lambda-| exactly when the trace is non-negative
    let normal_is_plus = half_tr >= 0.0;
    let lambda1 = if normal_is_plus { half_tr + d } else { half_tr - d };
    let strength = (polarity * lambda1).max(0.0);

    // doubled angle of the lambda+ eigenvector
    let (cp, sp) = if d > 0.0 { (half_diff / d, b / d) } else { (1.0, 0.0) };
    // tangent is perpendicular to the normal eigenvector
    let (c2, s2) = if normal_is_plus { (-cp, -sp) } else { (cp, sp) };

    // normal angle = tangent + 90 degrees; doubled: negate
    let normal_angle = 0.5 * (-s2).atan2(-c2) as f64;
    let q = ((normal_angle.rem_euclid(PI)) / (PI / 4.0)).round() as u8 % 4;
    Eigen {
        strength,
        c2,
        s2,
        normal_dir: q,
    }
}

const NMS_STEPS: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (-1, 1)];

/// Dual-purpose energy map: strength from the dominant Hessian eigenvalue
/// (sign chosen by `dark_ridges`), tangent orientation, curvature of the
/// tangent field, and a one-pixel ridge trace from non-maximum suppression.
pub fn energy_map(slice: &Slice, scale: Scale, settings: &AlgorithmSettings) -> EnergyMap {
    let field = hessian(&slice.pixels, scale.sigma(settings));
    let polarity = if settings.dark_ridges { 1.0 } else { -1.0 };
    energy_from_hessian(slice.z, scale, &field, polarity, settings.ridge_strength_min as f32)
}

pub fn energy_from_hessian(
    z: u32,
    scale: Scale,
    field: &HessianField,
    polarity: f32,
    strength_min: f32,
) -> EnergyMap {
    let (w, h) = (field.xx.width(), field.xx.height());
    let n = w * h;
    let mut strength = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    let mut dirs = Vec::with_capacity(n);
    for i in 0..n {
        let e = eigen(field.xx.data()[i], field.xy.data()[i], field.yy.data()[i], polarity);
        strength.push(e.strength);
        c2.push(e.c2);
        s2.push(e.s2);
        dirs.push(e.normal_dir);
    }

    let orientation: Vec<f32> = c2
        .iter()
        .zip(&s2)
        .map(|(&c, &s)| {
            let t = 0.5 * (s as f64).atan2(c as f64);
            t.rem_euclid(PI).min(PI.next_down()) as f32
        })
        .collect();

    let mut mask = vec![false; n];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let s = strength[i];
            if s <= 0.0 || s < strength_min {
                continue;
            }
            let (dx, dy) = NMS_STEPS[dirs[i] as usize];
            let fwd = strength[((y as isize + dy) as usize) * w + (x as isize + dx) as usize];
            let back = strength[((y as isize - dy) as usize) * w + (x as isize - dx) as usize];
            mask[i] = s > fwd && s >= back;
        }
    }

    let curvature = tangent_curvature(w, h, &c2, &s2, &orientation);

    EnergyMap {
        z,
        scale,
        strength: Plane::from_vec(w, h, strength),
        orientation: Plane::from_vec(w, h, orientation),
        curvature: Plane::from_vec(w, h, curvature),
        ridge_mask: Plane::from_vec(w, h, mask),
    }
}

/// d(theta)/ds along the tangent, from central differences of the doubled
/// angle field (which has no pi wrap-around).
fn tangent_curvature(w: usize, h: usize, c2: &[f32], s2: &[f32], theta: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let (tx, ty) = ((theta[i] as f64).cos(), (theta[i] as f64).sin());
            let dcx = 0.5 * (c2[i + 1] - c2[i - 1]) as f64;
            let dcy = 0.5 * (c2[i + w] - c2[i - w]) as f64;
            let dsx = 0.5 * (s2[i + 1] - s2[i - 1]) as f64;
            let dsy = 0.5 * (s2[i + w] - s2[i - w]) as f64;
            let dc = tx * dcx + ty * dcy;
            let ds = tx * dsx + ty * dsy;
            let (c, s) = (c2[i] as f64, s2[i] as f64);
            let m2 = c * c + s * s;
            if m2 > 0.0 {
                out[i] = (0.5 * (c * ds - s * dc) / m2) as f32;
            }
        }
    }
    out
}

const EMAP_MAGIC: &[u8; 4] = b"EMAP";
const EMAP_VERSION: u32 = 1;

/// `EMAP` v1: dimensions, scale tag, three f32 planes, then the mask packed
/// eight pixels per byte, least significant bit first.
pub fn encode_energy(map: &EnergyMap) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(EMAP_MAGIC)
        .u32(EMAP_VERSION)
        .u32(map.width() as u32)
        .u32(map.height() as u32)
        .u8(map.scale.tag());
    for plane in [&map.strength, &map.orientation, &map.curvature] {
        for &v in plane.data() {
            w.f32(v);
        }
    }
    for chunk in map.ridge_mask.data().chunks(8) {
        let mut byte = 0u8;
        for (bit, &on) in chunk.iter().enumerate() {
            if on {
                byte |= 1 << bit;
            }
        }
        w.u8(byte);
    }
    w.finish()
}

pub fn decode_energy(bytes: &[u8], z: u32, path: &Path) -> Result<EnergyMap> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(EMAP_MAGIC, EMAP_VERSION)?;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let tag = r.u8()?;
    let scale = Scale::from_tag(tag).ok_or_else(|| r.corrupt(format!("unknown scale tag {tag}")))?;
    let n = w * h;
    let mut planes = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.f32()?);
        }
        planes.push(Plane::from_vec(w, h, v));
    }
    let packed = r.take(n.div_ceil(8))?;
    let mask: Vec<bool> = (0..n).map(|i| packed[i / 8] & (1 << (i % 8)) != 0).collect();
    r.finish()?;
    let curvature = planes.pop().unwrap();
    let orientation = planes.pop().unwrap();
    let strength = planes.pop().unwrap();
    Ok(EnergyMap {
        z,
        scale,
        strength,
        orientation,
        curvature,
        ridge_mask: Plane::from_vec(w, h, mask),
    })
}

pub fn read_energy(path: &Path, z: u32) -> Result<EnergyMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_energy(&bytes, z, path)
}

/// Grayscale strength image with the ridge trace drawn white.
pub fn ridge_visualization(map: &EnergyMap) -> image::GrayImage {
    let (_, hi) = map.strength.min_max();
    let scale = if hi > 0.0 { 200.0 / hi } else { 0.0 };
    image::GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let v = if map.ridge_mask.get(x, y) {
            255
        } else {
            (map.strength.get(x, y) * scale).round().clamp(0.0, 200.0) as u8
        };
        image::Luma([v])
    })
}
