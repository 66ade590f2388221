//! Floating-point raster and the separable filtering used across the crate.

/// Row-major `f32` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample; `None` outside the raster.
    pub fn sample(&self, x: f32, y: f32) -> Option<f32> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let max_x = (self.width - 1) as f32;
        let max_y = (self.height - 1) as f32;
        if x > max_x || y > max_y {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Horizontal correlation with an odd-length kernel, clamping at the borders.
pub fn convolve_rows(src: &Plane, kernel: &[f32]) -> Plane {
    let r = (kernel.len() / 2) as isize;
    let w = src.width as isize;
    let mut out = Plane::new(src.width, src.height, 0.0);
    for y in 0..src.height {
        let row = &src.data[y * src.width..(y + 1) * src.width];
        let dst = &mut out.data[y * src.width..(y + 1) * src.width];
        for (x, d) in dst.iter_mut().enumerate() {
            let x = x as isize;
            let mut acc = 0.0f32;
            if x >= r && x + r < w {
                let start = (x - r) as usize;
                for (k, &t) in kernel.iter().enumerate() {
                    acc += t * row[start + k];
                }
            } else {
                for (k, &t) in kernel.iter().enumerate() {
                    let xx = (x + k as isize - r).clamp(0, w - 1) as usize;
                    acc += t * row[xx];
                }
            }
            *d = acc;
        }
    }
    out
}

/// Vertical correlation with an odd-length kernel, clamping at the borders.
pub fn convolve_cols(src: &Plane, kernel: &[f32]) -> Plane {
    let r = (kernel.len() / 2) as isize;
    let h = src.height as isize;
    let w = src.width;
    let mut out = Plane::new(src.width, src.height, 0.0);
    for y in 0..src.height {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (k, &t) in kernel.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, h - 1) as usize;
            let row = &src.data[yy * w..(yy + 1) * w];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += t * s;
            }
        }
    }
    out
}

pub fn convolve_separable(src: &Plane, kx: &[f32], ky: &[f32]) -> Plane {
    convolve_cols(&convolve_rows(src, kx), ky)
}

pub fn gaussian_blur(src: &Plane, sigma: f32) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let k = gaussian_kernel(sigma);
    convolve_separable(src, &k, &k)
}

/// Summed-area table with one row and column of zero padding.
pub struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    pub fn new(src: &Plane) -> Self {
        let w = src.width + 1;
        let mut sums = vec![0.0f64; w * (src.height + 1)];
        for y in 0..src.height {
            let mut row = 0.0f64;
            for x in 0..src.width {
                row += src.get(x, y) as f64;
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        Self { width: w, sums }
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let w = self.width;
        self.sums[y1 * w + x1] - self.sums[y0 * w + x1] - self.sums[y1 * w + x0] + self.sums[y0 * w + x0]
    }
}

/// Local box mean with the window clipped to the raster.
pub fn box_mean(src: &Plane, radius: usize) -> Plane {
    let integral = Integral::new(src);
    Plane::from_fn(src.width, src.height, |x, y| {
        let x0 = x.saturating_sub(radius);
        let y0 = y.saturating_sub(radius);
        let x1 = (x + radius + 1).min(src.width);
        let y1 = (y + radius + 1).min(src.height);
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        (integral.sum(x0, y0, x1, y1) / n) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_2d(src: &Plane, kx: &[f32], ky: &[f32]) -> Plane {
        let rx = (kx.len() / 2) as isize;
        let ry = (ky.len() / 2) as isize;
        Plane::from_fn(src.width, src.height, |x, y| {
            let mut acc = 0.0;
            for (j, &b) in ky.iter().enumerate() {
                for (i, &a) in kx.iter().enumerate() {
                    acc += a * b * src.get_clamped(x as isize + i as isize - rx, y as isize + j as isize - ry);
                }
            }
            acc
        })
    }

    #[test]
    fn separable_matches_direct_2d() {
        let src = Plane::from_fn(19, 13, |x, y| ((x * 7 + y * 13) % 11) as f32 - 5.0);
        let kx = [0.1, -0.4, 1.0, 0.3, 0.2];
        let ky = [0.5, 1.0, -0.25];
        let a = convolve_separable(&src, &kx, &ky);
        let b = direct_2d(&src, &kx, &ky);
        for (p, q) in a.data.iter().zip(&b.data) {
            assert!((p - q).abs() < 1e-4, "{p} vs {q}");
        }
    }

    #[test]
    fn gaussian_blur_preserves_constant() {
        let src = Plane::new(20, 20, 3.5);
        let out = gaussian_blur(&src, 1.7);
        assert!(out.data.iter().all(|v| (v - 3.5).abs() < 1e-5));
    }

    #[test]
    fn integral_sums_rectangles() {
        let src = Plane::from_fn(6, 5, |x, y| (x + 10 * y) as f32);
        let integral = Integral::new(&src);
        let expect: f32 = (1..4).flat_map(|x| (2..5).map(move |y| (x + 10 * y) as f32)).sum();
        assert_eq!(integral.sum(1, 2, 4, 5), expect as f64);
    }

    #[test]
    fn bilinear_sample_interpolates() {
        let src = Plane::from_fn(4, 4, |x, y| (x + y) as f32);
        assert_eq!(src.sample(1.5, 2.0), Some(3.5));
        assert_eq!(src.sample(-0.1, 0.0), None);
        assert_eq!(src.sample(3.0, 3.0), Some(6.0));
    }
}
