//! Deterministic synthetic images for tests, benchmarks and demos.
//!
//! Dark structures use a Gaussian cross-section parameterized by its full
//! width at half maximum.

use std::f64::consts::TAU;
use std::path::Path;

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::plane::Plane;

const FWHM_TO_SIGMA: f64 = 1.0 / 2.354_820_045;

/// Depth of a dark line at perpendicular distance `d`, in `[0, 1]`.
pub fn profile(d: f64, fwhm: f64) -> f64 {
    let s = fwhm * FWHM_TO_SIGMA;
    (-d * d / (2.0 * s * s)).exp()
}

fn shade(bg: f64, fg: f64, depth: f64) -> f32 {
    (bg + (fg - bg) * depth.clamp(0.0, 1.0)) as f32
}

/// Infinite dark line through `center` with tangent angle `angle`.
pub fn line_image(
    width: usize,
    height: usize,
    center: (f64, f64),
    angle: f64,
    fwhm: f64,
    bg: f64,
    fg: f64,
) -> Plane<f32> {
    let (dx, dy) = (angle.cos(), angle.sin());
    Plane::from_fn(width, height, |x, y| {
        let (rx, ry) = (x as f64 - center.0, y as f64 - center.1);
        shade(bg, fg, profile(rx * dy - ry * dx, fwhm))
    })
}

/// Dark circle of radius `r`.
pub fn ring_image(
    width: usize,
    height: usize,
    center: (f64, f64),
    r: f64,
    fwhm: f64,
    bg: f64,
    fg: f64,
) -> Plane<f32> {
    ring_with_gap(width, height, center, r, fwhm, bg, fg, 0.0)
}

/// Dark circle with the arc `angle in [0, 2 pi gap)` removed.
#[allow(clippy::too_many_arguments)]
pub fn ring_with_gap(
    width: usize,
    height: usize,
    center: (f64, f64),
    r: f64,
    fwhm: f64,
    bg: f64,
    fg: f64,
    gap: f64,
) -> Plane<f32> {
    let gap_end = gap * TAU;
    Plane::from_fn(width, height, |x, y| {
        let (rx, ry) = (x as f64 - center.0, y as f64 - center.1);
        let phi = ry.atan2(rx).rem_euclid(TAU);
        if phi < gap_end {
            return bg as f32;
        }
        shade(bg, fg, profile((rx * rx + ry * ry).sqrt() - r, fwhm))
    })
}

/// Two vertical dark lines at `x1` and `x2`.
#[allow(clippy::too_many_arguments)]
pub fn two_bars(
    width: usize,
    height: usize,
    x1: f64,
    fwhm1: f64,
    x2: f64,
    fwhm2: f64,
    bg: f64,
    fg: f64,
) -> Plane<f32> {
    Plane::from_fn(width, height, |x, _| {
        let x = x as f64;
        let depth = profile(x - x1, fwhm1).max(profile(x - x2, fwhm2));
        shade(bg, fg, depth)
    })
}

/// Smooth random texture of overlapping dark and bright blobs.
pub fn blobs(width: usize, height: usize, seed: u64) -> Plane<f32> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spots: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(1.5..6.0),
                rng.random_range(-80.0..80.0),
            )
        })
        .collect();
    Plane::from_fn(width, height, |x, y| {
        let mut v = 128.0;
        for &(cx, cy, s, amp) in &spots {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            v += amp * (-d2 / (2.0 * s * s)).exp();
        }
        v as f32
    })
}

/// One membrane-bounded organelle in the phantom, in resampled pixel units.
#[derive(Clone, Debug)]
pub struct Organelle {
    pub center: Point,
    pub semi_axes: (f64, f64),
    pub rotation: f64,
    /// Spacing of the internal lamellae; `None` leaves the lumen flat.
    pub cristae_spacing: Option<f64>,
    /// Fraction of the outline, starting at the +u axis, drawn without membrane.
    pub gap: f64,
}

/// Parameters of the multi-slice phantom stack.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub width: usize,
    pub height: usize,
    pub psize: f64,
    pub target_psize: f64,
    pub z_first: u32,
    pub z_last: u32,
    pub organelles: Vec<Organelle>,
    pub background: f64,
    pub lumen: f64,
    pub membrane: f64,
    pub membrane_fwhm: f64,
    pub membrane_gap: f64,
    pub crista: f64,
    pub crista_fwhm: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for Phantom {
    /// 40 slices of 350 x 600 px at 2.2 nm/px: two cristae-filled organelles
    /// and a flat ring between them.
    fn default() -> Self {
        Phantom {
            width: 350,
            height: 600,
            psize: 2.2,
            target_psize: 2.0,
            z_first: 35,
            z_last: 74,
            organelles: vec![
                Organelle {
                    center: Point::new(190.0, 135.0),
                    semi_axes: (85.0, 55.0),
                    rotation: 0.1,
                    cristae_spacing: Some(13.0),
                    gap: 0.0,
                },
                Organelle {
                    center: Point::new(195.0, 330.0),
                    semi_axes: (55.0, 45.0),
                    rotation: 0.0,
                    cristae_spacing: None,
                    gap: 0.0,
                },
                Organelle {
                    center: Point::new(200.0, 520.0),
                    semi_axes: (75.0, 60.0),
                    rotation: -0.35,
                    cristae_spacing: Some(12.0),
                    gap: 0.0,
                },
            ],
            background: 175.0,
            lumen: 150.0,
            membrane: 60.0,
            membrane_fwhm: 2.5,
            membrane_gap: 5.0,
            crista: 80.0,
            crista_fwhm: 2.5,
            noise_sigma: 6.0,
            seed: 18,
        }
    }
}

impl Organelle {
    /// Geometry at slice `z`: a gentle breathing of the axes and centre.
    fn at(&self, phase: f64) -> (Point, f64, f64) {
        let k = 1.0 + 0.05 * phase.sin();
        let c = self.center + Point::new(2.0 * phase.cos(), 1.5 * phase.sin());
        (c, self.semi_axes.0 * k, self.semi_axes.1 * k)
    }
}

impl Phantom {
    pub fn slice_count(&self) -> u32 {
        self.z_last - self.z_first + 1
    }

    /// Slice `z` rendered at the acquisition pixel size.
    pub fn render(&self, z: u32) -> Plane<f32> {
        let phase = TAU * (z - self.z_first) as f64 / self.slice_count() as f64;
        let shapes: Vec<_> = self.organelles.iter().map(|o| (o, o.at(phase))).collect();
        let ratio = self.psize / self.target_psize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(1_000_003) ^ z as u64);
        let noise = Normal::new(0.0, self.noise_sigma.max(1e-12)).expect("finite sigma");

        Plane::from_fn(self.width, self.height, |i, j| {
            let p = Point::new((i as f64 + 0.5) * ratio - 0.5, (j as f64 + 0.5) * ratio - 0.5);
            let mut v = self.background;
            for (o, (c, a, b)) in &shapes {
                v = self.shade_organelle(o, *c, *a, *b, p, v);
            }
            let n = if self.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (v + n).clamp(0.0, 255.0) as f32
        })
    }

    fn shade_organelle(&self, o: &Organelle, c: Point, a: f64, b: f64, p: Point, v: f64) -> f64 {
        let (cr, sr) = (o.rotation.cos(), o.rotation.sin());
        let d = p - c;
        let u = d.x * cr + d.y * sr;
        let w = -d.x * sr + d.y * cr;
        let rho = ((u / a).powi(2) + (w / b).powi(2)).sqrt();
        let grad = if rho > 0.0 {
            ((u / (a * a)).powi(2) + (w / (b * b)).powi(2)).sqrt() / rho
        } else {
            1.0 / a.min(b)
        };
        // signed distance to the ellipse, first order
        let dist = (rho - 1.0) / grad;
        if dist > 3.0 * self.membrane_fwhm + self.membrane_gap {
            return v;
        }
        let mut out = if dist < 0.0 { self.lumen } else { v };
        if let Some(spacing) = o.cristae_spacing {
            let margin = self.membrane_gap + 2.0 * self.membrane_fwhm;
            if dist < -margin {
                let wave = 1.5 * (u / 9.0).sin();
                let off = (w + wave).rem_euclid(spacing) - 0.5 * spacing;
                let fade = ((-dist - margin) / 3.0).min(1.0);
                let depth = profile(off, self.crista_fwhm) * fade;
                out = out + (self.crista - out) * depth;
            }
        }
        if o.gap > 0.0 && (w / b).atan2(u / a).rem_euclid(TAU) < o.gap * TAU {
            return out;
        }
        let half = 0.5 * self.membrane_gap;
        let depth = profile(dist - half, self.membrane_fwhm).max(profile(dist + half, self.membrane_fwhm));
        out + (self.membrane - out) * depth
    }

    /// Contour of organelle `index` at slice `z`, in resampled pixels.
    pub fn outline(&self, index: usize, z: u32, nodes: usize) -> Vec<Point> {
        let phase = TAU * (z - self.z_first) as f64 / self.slice_count() as f64;
        let o = &self.organelles[index];
        let (c, a, b) = o.at(phase);
        let (cr, sr) = (o.rotation.cos(), o.rotation.sin());
        (0..nodes)
            .map(|k| {
                let t = TAU * k as f64 / nodes as f64;
                let (u, w) = (a * t.cos(), b * t.sin());
                c + Point::new(u * cr - w * sr, u * sr + w * cr)
            })
            .collect()
    }

    /// Writes every slice as an 8-bit PNG named by `pattern` (`%04d` style).
    pub fn write(&self, dir: &Path, name_for: impl Fn(u32) -> String) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for z in self.z_first..=self.z_last {
            let p = self.render(z);
            let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
                image::Luma([p.get(x as usize, y as usize).round() as u8])
            });
            let path = dir.join(name_for(z));
            img.save(&path).map_err(|e| Error::Encode {
                path: path.clone(),
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_half_maximum() {
        assert!((profile(1.5, 3.0) - 0.5).abs() < 1e-6);
        assert_eq!(profile(0.0, 3.0), 1.0);
    }

    #[test]
    fn phantom_is_deterministic() {
        let ph = Phantom::default();
        assert_eq!(ph.render(40), ph.render(40));
        assert_ne!(ph.render(40), ph.render(41));
        let p = ph.render(35);
        assert_eq!((p.width(), p.height()), (350, 600));
    }

    #[test]
    fn outline_is_positive() {
        let ph = Phantom::default();
        let poly = ph.outline(0, 35, 64);
        assert!(crate::geometry::signed_area(&poly) > 0.0);
    }
}
