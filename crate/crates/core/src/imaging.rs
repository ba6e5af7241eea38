//! Slice loading and Phase-1 preprocessing: region of interest, contrast
//! stretch, resampling to the working pixel size, then bilateral and
//! Gaussian smoothing. The stage order is fixed.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Luma};

use crate::config::{AlgorithmSettings, Rect};
use crate::error::{Error, Result};
use crate::plane::{filter_cols, filter_rows, reflect101, Kernel, Plane};

/// One grayscale slice. Intensities lie on the 0-255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub z: u32,
    /// nm per pixel.
    pub psize: f64,
    pub pixels: Plane<f32>,
}

impl Slice {
    pub fn new(z: u32, psize: f64, pixels: Plane<f32>) -> Self {
        Slice { z, psize, pixels }
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    fn with_pixels(&self, pixels: Plane<f32>) -> Slice {
        Slice {
            z: self.z,
            psize: self.psize,
            pixels,
        }
    }
}

/// Z-ordered slices sharing dimensions and pixel size.
#[derive(Clone, Debug)]
pub struct SliceStack {
    pub slices: Vec<Slice>,
    pub roi_applied: Rect,
}

/// Reads a PNG, BMP or TIFF slice. 8-bit values are kept as they are; 16-bit
/// values are mapped linearly so that 65535 becomes 255; colour is reduced
/// to luminance.
pub fn load_slice(path: &Path, z: u32, psize: f64) -> Result<Slice> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Bmp | ImageFormat::Tiff) => {}
        Some(other) => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("{other:?} is not one of PNG, BMP, TIFF"),
            })
        }
        None => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: "unrecognized file signature".into(),
            })
        }
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::Format {
            path: path.to_path_buf(),
            detail: u.to_string(),
        },
        other => Error::Decode {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    Ok(Slice::new(z, psize, image_to_plane(&img)))
}

fn image_to_plane(img: &DynamicImage) -> Plane<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => Plane::from_vec(w, h, g.as_raw().iter().map(|&v| v as f32).collect()),
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            let g = img.to_luma16();
            Plane::from_vec(
                w,
                h,
                g.as_raw()
                    .iter()
                    .map(|&v| (v as f64 * 255.0 / 65535.0) as f32)
                    .collect(),
            )
        }
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            let g = img.to_luma32f();
            Plane::from_vec(w, h, g.as_raw().iter().map(|&v| v.clamp(0.0, 1.0) * 255.0).collect())
        }
        _ => {
            let g = img.to_luma8();
            Plane::from_vec(w, h, g.as_raw().iter().map(|&v| v as f32).collect())
        }
    }
}

/// Rounds to 8 bits.
pub fn to_gray_image(p: &Plane<f32>) -> GrayImage {
    GrayImage::from_fn(p.width() as u32, p.height() as u32, |x, y| {
        Luma([p.get(x as usize, y as usize).round().clamp(0.0, 255.0) as u8])
    })
}

pub fn encode_png(img: &DynamicImage, path_hint: &Path) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| Error::Encode {
        path: path_hint.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(buf.into_inner())
}

/// Smallest rectangle left after stripping border rows and columns whose
/// intensity variance is below `variance_threshold` on every slice.
pub fn auto_roi(planes: &[&Plane<f32>], variance_threshold: f64) -> Result<Rect> {
    let first = planes
        .first()
        .ok_or_else(|| Error::Internal("automatic ROI on an empty stack".into()))?;
    let (w, h) = (first.width(), first.height());

    let mut flat_row = vec![true; h];
    let mut flat_col = vec![true; w];
    for p in planes {
        for (y, flag) in flat_row.iter_mut().enumerate() {
            if *flag {
                *flag = variance((0..w).map(|x| p.get(x, y))) < variance_threshold;
            }
        }
        for (x, flag) in flat_col.iter_mut().enumerate() {
            if *flag {
                *flag = variance((0..h).map(|y| p.get(x, y))) < variance_threshold;
            }
        }
    }

    let top = flat_row.iter().take_while(|&&f| f).count();
    let bottom = flat_row.iter().rev().take_while(|&&f| f).count();
    let left = flat_col.iter().take_while(|&&f| f).count();
    let right = flat_col.iter().rev().take_while(|&&f| f).count();
    let width = w.saturating_sub(left + right);
    let height = h.saturating_sub(top + bottom);
    if width < 32 || height < 32 {
        return Err(Error::DegenerateRoi { width, height });
    }
    Ok(Rect::new(left, top, width, height))
}

fn variance(values: impl Iterator<Item = f32>) -> f64 {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for v in values {
        n += 1;
        let v = v as f64;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    if n == 0 {
        0.0
    } else {
        m2 / n as f64
    }
}

pub fn crop(slice: &Slice, roi: Rect) -> Result<Slice> {
    if roi.right() > slice.width() || roi.bottom() > slice.height() {
        return Err(Error::Roi(format!(
            "rectangle {roi} exceeds the {}x{} slice {}",
            slice.width(),
            slice.height(),
            slice.z
        )));
    }
    Ok(slice.with_pixels(slice.pixels.crop(roi.left, roi.top, roi.width, roi.height)))
}

/// Nearest-rank percentile over a sorted sample.
fn percentile(sorted: &[f32], pct: f64) -> f32 {
    let idx = ((pct / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Linear stretch mapping the low percentile to 0 and the high percentile to
/// 255, clipping outside. A collapsed histogram yields an all-zero slice.
pub fn auto_contrast(slice: &Slice, low_pct: f64, high_pct: f64) -> Slice {
    let mut sorted = slice.pixels.data().to_vec();
    if sorted.is_empty() {
        return slice.clone();
    }
    sorted.sort_unstable_by(f32::total_cmp);
    let lo = percentile(&sorted, low_pct);
    let hi = percentile(&sorted, high_pct);
    if hi <= lo {
        return slice.with_pixels(Plane::new(slice.width(), slice.height(), 0.0));
    }
    let scale = 255.0 / (hi - lo);
    slice.with_pixels(slice.pixels.map(|v| ((v - lo) * scale).clamp(0.0, 255.0)))
}

/// Bilinear resampling so that one output pixel spans `target_psize` nm.
pub fn resample(slice: &Slice, target_psize: f64) -> Result<Slice> {
    let ratio = slice.psize / target_psize;
    let out_w = (slice.width() as f64 * ratio).round() as usize;
    let out_h = (slice.height() as f64 * ratio).round() as usize;
    if out_w < 8 || out_h < 8 {
        return Err(Error::Resolution {
            width: out_w,
            height: out_h,
        });
    }
    if out_w == slice.width() && out_h == slice.height() {
        return Ok(Slice::new(slice.z, target_psize, slice.pixels.clone()));
    }
    let sx = slice.width() as f64 / out_w as f64;
    let sy = slice.height() as f64 / out_h as f64;
    let src = &slice.pixels;
    let pixels = Plane::from_fn(out_w, out_h, |x, y| {
        let fx = (x as f64 + 0.5) * sx - 0.5;
        let fy = (y as f64 + 0.5) * sy - 0.5;
        src.sample(fx, fy) as f32
    });
    Ok(Slice::new(slice.z, target_psize, pixels))
}

/// Edge-preserving bilateral filter over a disk of the given diameter.
pub fn bilateral_filter(
    src: &Plane<f32>,
    diameter: u32,
    sigma_range: f64,
    sigma_spatial: f64,
) -> Plane<f32> {
    let r = (diameter / 2) as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                let ws = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_spatial * sigma_spatial)).exp();
                offsets.push((dx, dy, ws as f32));
            }
        }
    }
    let inv_range = (1.0 / (2.0 * sigma_range * sigma_range)) as f32;
    let (w, h) = (src.width(), src.height());
    Plane::from_fn(w, h, |x, y| {
        let c = src.get(x, y);
        let (mut num, mut den) = (0.0f32, 0.0f32);
        for &(dx, dy, ws) in &offsets {
            let v = src.get(
                reflect101(x as isize + dx, w),
                reflect101(y as isize + dy, h),
            );
            let d = v - c;
            let wgt = ws * (-d * d * inv_range).exp();
            num += wgt * v;
            den += wgt;
        }
        (num / den).clamp(0.0, 255.0)
    })
}

pub fn gaussian_blur(src: &Plane<f32>, sigma: f64) -> Plane<f32> {
    let k = Kernel::gaussian(sigma, (3.0 * sigma).ceil().max(1.0) as usize);
    filter_cols(&filter_rows(src, &k), &k)
}

/// Bilateral filter followed by Gaussian blur.
pub fn smooth(slice: &Slice, settings: &AlgorithmSettings) -> Slice {
    let b = bilateral_filter(
        &slice.pixels,
        settings.bilateral_diameter,
        settings.bilateral_sigma_range,
        settings.bilateral_sigma_spatial,
    );
    slice.with_pixels(gaussian_blur(&b, settings.gaussian_sigma))
}

/// Full per-slice chain after the ROI crop: contrast, resample, smooth.
pub fn preprocess(slice: &Slice, settings: &AlgorithmSettings) -> Result<Slice> {
    let stretched = auto_contrast(slice, settings.contrast_low_pct, settings.contrast_high_pct);
    let resampled = resample(&stretched, settings.target_psize)?;
    Ok(smooth(&resampled, settings))
}
