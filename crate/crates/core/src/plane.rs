//! Dense row-major 2D arrays and the separable convolution passes used by
//! the smoothing and Hessian stages.

#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Plane {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    /// Panics when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size mismatch");
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sub-rectangle copy; the caller guarantees the rectangle is in bounds.
    pub fn crop(&self, left: usize, top: usize, width: usize, height: usize) -> Plane<T> {
        Plane::from_fn(width, height, |x, y| self.get(left + x, top + y))
    }

    /// Rotates by 90 degrees: output pixel `(x, y)` is input `(y, H - 1 - x)`.
    pub fn rotate90(&self) -> Plane<T> {
        let (w, h) = (self.width, self.height);
        Plane::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }
}

impl Plane<f32> {
    /// Bilinear sample with coordinates clamped to the plane.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xf = x.clamp(0.0, (self.width - 1) as f64);
        let yf = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xf.floor() as usize;
        let y0 = yf.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xf - x0 as f64;
        let fy = yf - y0 as f64;
        let a = self.get(x0, y0) as f64;
        let b = self.get(x1, y0) as f64;
        let c = self.get(x0, y1) as f64;
        let d = self.get(x1, y1) as f64;
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        top + (bottom - top) * fy
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// A 1D correlation kernel stored as its centre tap plus one half. Even
/// kernels weight `f[x + k] + f[x - k]`, odd kernels `f[x + k] - f[x - k]`;
/// pairing the taps keeps results exactly mirror-symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub center: f32,
    pub half: Vec<f32>,
    pub odd: bool,
}

impl Kernel {
    pub fn radius(&self) -> usize {
        self.half.len()
    }

    /// Sampled Gaussian, normalized to unit sum.
    pub fn gaussian(sigma: f64, radius: usize) -> Kernel {
        let w: Vec<f64> = (0..=radius)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        Kernel {
            center: (w[0] / sum) as f32,
            half: w[1..].iter().map(|v| (v / sum) as f32).collect(),
            odd: false,
        }
    }

    /// First derivative of a Gaussian with unit response to a linear ramp.
    pub fn gaussian_d1(sigma: f64, radius: usize) -> Kernel {
        let w: Vec<f64> = (1..=radius)
            .map(|k| {
                let k = k as f64;
                k * (-(k * k) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let moment: f64 = w
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * (i + 1) as f64 * v)
            .sum();
        Kernel {
            center: 0.0,
            half: w.iter().map(|v| (v / moment) as f32).collect(),
            odd: true,
        }
    }

    /// Second derivative of a Gaussian: zero sum, response 2 to `x^2`.
    pub fn gaussian_d2(sigma: f64, radius: usize) -> Kernel {
        let s2 = sigma * sigma;
        let g: Vec<f64> = (0..=radius)
            .map(|k| (-((k * k) as f64) / (2.0 * s2)).exp())
            .collect();
        let gsum = g[0] + 2.0 * g[1..].iter().sum::<f64>();
        let mut w: Vec<f64> = (0..=radius)
            .map(|k| {
                let k2 = (k * k) as f64;
                (k2 / (s2 * s2) - 1.0 / s2) * g[k]
            })
            .collect();
        let wsum = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        for (k, v) in w.iter_mut().enumerate() {
            *v -= wsum * g[k] / gsum;
        }
        let moment: f64 = w
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, v)| (k * k) as f64 * v)
            .sum();
        Kernel {
            center: (w[0] / moment) as f32,
            half: w[1..].iter().map(|v| (v / moment) as f32).collect(),
            odd: false,
        }
    }
}

#[inline]
fn correlate_line(src: &[f32], stride: usize, n: usize, pos: usize, k: &Kernel) -> f32 {
    let at = |i: isize| src[reflect101(i, n) * stride];
    let p = pos as isize;
    let mut acc = k.center * at(p);
    if k.odd {
        for (j, &w) in k.half.iter().enumerate() {
            let d = (j + 1) as isize;
            acc += w * (at(p + d) - at(p - d));
        }
    } else {
        for (j, &w) in k.half.iter().enumerate() {
            let d = (j + 1) as isize;
            acc += w * (at(p + d) + at(p - d));
        }
    }
    acc
}

/// Correlates every row with `k` (derivative along x).
pub fn filter_rows(src: &Plane<f32>, k: &Kernel) -> Plane<f32> {
    let (w, h) = (src.width(), src.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = src.row(y);
        for x in 0..w {
            out.push(correlate_line(row, 1, w, x, k));
        }
    }
    Plane::from_vec(w, h, out)
}

/// Correlates every column with `k` (derivative along y).
pub fn filter_cols(src: &Plane<f32>, k: &Kernel) -> Plane<f32> {
    let (w, h) = (src.width(), src.height());
    let mut out = vec![0.0f32; w * h];
    let data = src.data();
    for x in 0..w {
        let col = &data[x..];
        for y in 0..h {
            out[y * w + x] = correlate_line(col, w, h, y, k);
        }
    }
    Plane::from_vec(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect101(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect101(-4, 1), 0);
    }

    #[test]
    fn derivative_kernel_moments() {
        let d1 = Kernel::gaussian_d1(2.0, 8);
        let m: f64 = d1
            .half
            .iter()
            .enumerate()
            .map(|(i, &v)| 2.0 * (i + 1) as f64 * v as f64)
            .sum();
        assert!((m - 1.0).abs() < 1e-6);

        let d2 = Kernel::gaussian_d2(2.0, 8);
        let sum = d2.center as f64 + 2.0 * d2.half.iter().map(|&v| v as f64).sum::<f64>();
        assert!(sum.abs() < 1e-6);
    }

    #[test]
    fn rows_then_transpose_matches_cols() {
        let p = Plane::from_fn(13, 9, |x, y| ((x * 7 + y * 3) % 11) as f32);
        let k = Kernel::gaussian(1.3, 4);
        let a = filter_rows(&p, &k);
        let b = filter_cols(&p.rotate90(), &k);
        // rotate90 maps rows of `p` onto reversed columns
        let back = Plane::from_fn(13, 9, |x, y| b.get(8 - y, x));
        assert_eq!(a, back);
    }

    #[test]
    fn bilinear_sample_corners() {
        let p = Plane::from_vec(2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.sample(0.5, 0.5), 1.5);
        assert_eq!(p.sample(-3.0, 0.0), 0.0);
        assert_eq!(p.sample(1.0, 1.0), 3.0);
    }
}
