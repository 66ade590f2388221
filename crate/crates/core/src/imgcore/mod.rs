//! Image representation, normalization, foreground segmentation and
//! orientation-field estimation.
//!
//! Intensity convention: ridges are dark (low values), background is white.
//! Angles are measured in pixel coordinates (x right, y down), so the
//! direction `theta` is the unit vector `(cos theta, sin theta)`.

pub mod filter;
pub mod io;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use filter::Plane;

/// Smallest width and height accepted by the processing operations.
pub const MIN_DIM: usize = 32;

pub const DEFAULT_TARGET_MEAN: f64 = 128.0;
pub const DEFAULT_TARGET_VAR: f64 = 2000.0;
pub const DEFAULT_BLOCK: usize = 16;

/// Fraction of the global image variance a block must exceed to count as
/// fingerprint area.
pub const DEFAULT_SEGMENT_RATIO: f64 = 0.2;

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Nominal resolution; metadata only.
    pub dpi: u32,
}

impl FingerprintImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, dpi: u32) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::PixelCount {
                len: pixels.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            dpi,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            dpi: 500,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
            dpi: 500,
        }
    }

    /// Quantizes a float raster (rounded, clamped to 0..=255).
    pub fn from_plane(plane: &Plane, dpi: u32) -> Self {
        Self {
            width: plane.width,
            height: plane.height,
            pixels: plane.data.iter().map(|&v| quantize(v as f64)).collect(),
            dpi,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| p as f32).collect(),
        }
    }

    /// Rejects images below the processing minimum.
    pub fn check_size(&self) -> Result<()> {
        if self.width < MIN_DIM || self.height < MIN_DIM {
            return Err(Error::ImageTooSmall {
                width: self.width,
                height: self.height,
                min: MIN_DIM,
            });
        }
        Ok(())
    }

    pub fn mean_and_variance(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let mean = self.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
        let var = self
            .pixels
            .iter()
            .map(|&p| {
                let d = p as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var)
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Affine intensity normalization to a target mean and variance.
///
/// A constant input maps to the constant `target_mean` image.
pub fn normalize(img: &FingerprintImage, target_mean: f64, target_var: f64) -> Result<FingerprintImage> {
    img.check_size()?;
    if !(target_var > 0.0) {
        return Err(Error::param("target variance must be positive"));
    }
    let (mean, var) = img.mean_and_variance();
    let pixels = if var <= 0.0 {
        vec![quantize(target_mean); img.pixels.len()]
    } else {
        let gain = (target_var / var).sqrt();
        img.pixels
            .iter()
            .map(|&p| quantize(target_mean + (p as f64 - mean) * gain))
            .collect()
    };
    Ok(FingerprintImage { pixels, ..img.clone() })
}

/// `normalize` with the default targets.
pub fn normalize_default(img: &FingerprintImage) -> Result<FingerprintImage> {
    normalize(img, DEFAULT_TARGET_MEAN, DEFAULT_TARGET_VAR)
}

fn block_grid(width: usize, height: usize, block: usize) -> (usize, usize) {
    (width.div_ceil(block), height.div_ceil(block))
}

/// Per-block ridge orientation and coherence.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    /// Ridge direction per block, in `[0, pi)`.
    pub angles: Vec<f64>,
    /// Squared-gradient coherence per block, in `[0, 1]`.
    pub coherence: Vec<f64>,
}

impl OrientationField {
    pub fn angle(&self, bx: usize, by: usize) -> f64 {
        self.angles[by * self.cols + bx]
    }

    pub fn coherence_at(&self, bx: usize, by: usize) -> f64 {
        self.coherence[by * self.cols + bx]
    }

    /// Orientation of the block containing pixel `(x, y)`.
    pub fn angle_at_pixel(&self, x: usize, y: usize) -> f64 {
        self.angle(
            (x / self.block_size).min(self.cols - 1),
            (y / self.block_size).min(self.rows - 1),
        )
    }

    pub fn coherence_at_pixel(&self, x: usize, y: usize) -> f64 {
        self.coherence_at(
            (x / self.block_size).min(self.cols - 1),
            (y / self.block_size).min(self.rows - 1),
        )
    }
}

/// Sobel gradients with clamped borders.
pub(crate) fn sobel(plane: &Plane) -> (Plane, Plane) {
    let (w, h) = (plane.width, plane.height);
    let mut gx = Plane::new(w, h, 0.0);
    let mut gy = Plane::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| plane.get_clamped(x as isize + dx, y as isize + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gx.data[y * w + x] = sx;
            gy.data[y * w + x] = sy;
        }
    }
    (gx, gy)
}

/// Averaged squared-gradient orientation estimate.
pub fn estimate_orientation_field(img: &FingerprintImage, block_size: usize) -> Result<OrientationField> {
    img.check_size()?;
    if !(8..=32).contains(&block_size) {
        return Err(Error::param(format!("block size {block_size} outside [8, 32]")));
    }
    let (gx, gy) = sobel(&img.to_plane());
    let (cols, rows) = block_grid(img.width, img.height, block_size);
    let mut angles = Vec::with_capacity(cols * rows);
    let mut coherence = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let (mut gxx, mut gxy, mut gsum) = (0.0f64, 0.0f64, 0.0f64);
            for y in by * block_size..((by + 1) * block_size).min(img.height) {
                for x in bx * block_size..((bx + 1) * block_size).min(img.width) {
                    let a = gx.get(x, y) as f64;
                    let b = gy.get(x, y) as f64;
                    gxx += a * a - b * b;
                    gxy += 2.0 * a * b;
                    gsum += a * a + b * b;
                }
            }
            // Gradient direction is normal to the ridges.
            let gradient = 0.5 * gxy.atan2(gxx);
            angles.push(wrap_pi(gradient + PI / 2.0));
            let c = if gsum > 0.0 {
                (gxx.hypot(gxy) / gsum).clamp(0.0, 1.0)
            } else {
                0.0
            };
            coherence.push(c);
        }
    }
    Ok(OrientationField {
        block_size,
        cols,
        rows,
        angles,
        coherence,
    })
}

/// Wraps an angle into `[0, pi)`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_2pi(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Smallest distance between two unsigned orientations (period pi).
pub fn orientation_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Smallest distance between two directions (period 2 pi).
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Per-block foreground flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub mask: Vec<bool>,
}

impl ForegroundMask {
    /// Mask with every block marked as foreground.
    pub fn full(width: usize, height: usize, block_size: usize) -> Self {
        let (cols, rows) = block_grid(width, height, block_size);
        Self {
            block_size,
            cols,
            rows,
            mask: vec![true; cols * rows],
        }
    }

    pub fn get(&self, bx: usize, by: usize) -> bool {
        self.mask[by * self.cols + bx]
    }

    /// Block lookup with out-of-grid positions reported as background.
    pub fn get_signed(&self, bx: isize, by: isize) -> bool {
        bx >= 0
            && by >= 0
            && (bx as usize) < self.cols
            && (by as usize) < self.rows
            && self.get(bx as usize, by as usize)
    }

    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        self.get_signed((x / self.block_size) as isize, (y / self.block_size) as isize)
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }
}

/// Variance-threshold segmentation with the default ratio.
pub fn segment_foreground(img: &FingerprintImage, block_size: usize) -> Result<ForegroundMask> {
    segment_foreground_with(img, block_size, DEFAULT_SEGMENT_RATIO)
}

/// Marks blocks whose local variance exceeds `ratio` times the global image
/// variance. Border blocks use only in-image pixels.
pub fn segment_foreground_with(img: &FingerprintImage, block_size: usize, ratio: f64) -> Result<ForegroundMask> {
    img.check_size()?;
    if block_size == 0 {
        return Err(Error::param("block size must be positive"));
    }
    let (_, global_var) = img.mean_and_variance();
    let threshold = ratio * global_var;
    let (cols, rows) = block_grid(img.width, img.height, block_size);
    let mut mask = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let (mut s, mut s2, mut n) = (0.0f64, 0.0f64, 0usize);
            for y in by * block_size..((by + 1) * block_size).min(img.height) {
                for x in bx * block_size..((bx + 1) * block_size).min(img.width) {
                    let v = img.get(x, y) as f64;
                    s += v;
                    s2 += v * v;
                    n += 1;
                }
            }
            let mean = s / n as f64;
            let var = (s2 / n as f64 - mean * mean).max(0.0);
            mask.push(global_var > 0.0 && var > threshold);
        }
    }
    Ok(ForegroundMask {
        block_size,
        cols,
        rows,
        mask,
    })
}

/// Normalization, segmentation and orientation estimation bundled together,
/// as consumed by the feature extractors and the quality assessor.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub image: FingerprintImage,
    pub mask: ForegroundMask,
    pub orientation: OrientationField,
}

pub fn preprocess(img: &FingerprintImage) -> Result<Preprocessed> {
    let image = normalize_default(img)?;
    let mask = segment_foreground(&image, DEFAULT_BLOCK)?;
    let orientation = estimate_orientation_field(&image, DEFAULT_BLOCK)?;
    Ok(Preprocessed {
        image,
        mask,
        orientation,
    })
}

/// Sinusoidal stripe pattern whose ridges run along direction `angle`.
pub fn stripe_image(width: usize, height: usize, angle: f64, period: f64) -> FingerprintImage {
    let (nx, ny) = (-angle.sin(), angle.cos());
    FingerprintImage::from_fn(width, height, |x, y| {
        let t = (x as f64 * nx + y as f64 * ny) * 2.0 * PI / period;
        quantize(128.0 + 100.0 * t.cos())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn interior_blocks(field: &OrientationField) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..field.rows - 1).flat_map(move |by| (1..field.cols - 1).map(move |bx| (bx, by)))
    }

    #[test]
    fn normalize_constant_maps_to_target_mean() {
        let img = FingerprintImage::filled(64, 64, 64);
        let out = normalize(&img, 128.0, 100.0).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn normalize_identity_when_already_at_target() {
        // Two levels at 118 and 138 give mean 128, variance 100.
        let img = FingerprintImage::from_fn(64, 64, |x, y| if (x + y) % 2 == 0 { 118 } else { 138 });
        let (m, v) = img.mean_and_variance();
        assert_eq!((m, v), (128.0, 100.0));
        let out = normalize(&img, 128.0, 100.0).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn normalize_two_level_image() {
        let img = FingerprintImage::from_fn(64, 64, |x, _| if x < 32 { 0 } else { 255 });
        let out = normalize(&img, 128.0, 1000.0).unwrap();
        let mut levels: Vec<u8> = out.pixels().to_vec();
        levels.sort_unstable();
        levels.dedup();
        let s = 1000f64.sqrt();
        assert_eq!(levels, vec![quantize(128.0 - s), quantize(128.0 + s)]);
        assert_eq!(levels, vec![96, 160]);
    }

    #[test]
    fn normalize_hits_targets() {
        let mut rng = crate::seed::rng(3);
        let img = FingerprintImage::from_fn(80, 70, |_, _| rng.random_range(40..200));
        let out = normalize(&img, 128.0, 2000.0).unwrap();
        let (m, v) = out.mean_and_variance();
        assert!((m - 128.0).abs() <= 1.0, "mean {m}");
        assert!((v / 2000.0 - 1.0).abs() <= 0.05, "var {v}");
    }

    #[test]
    fn normalize_rejects_small_and_bad_targets() {
        let img = FingerprintImage::filled(31, 64, 0);
        assert!(matches!(normalize(&img, 128.0, 1.0), Err(Error::ImageTooSmall { .. })));
        let img = FingerprintImage::filled(32, 32, 0);
        assert!(matches!(normalize(&img, 128.0, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = crate::seed::rng(11);
        for _ in 0..20 {
            let img = FingerprintImage::from_fn(48, 40, |_, _| rng.random_range(0..=255));
            let once = normalize_default(&img).unwrap();
            let twice = normalize_default(&once).unwrap();
            for (a, b) in once.pixels().iter().zip(twice.pixels()) {
                assert!((*a as i32 - *b as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn orientation_of_horizontal_and_vertical_stripes() {
        for &(angle, expect) in &[(0.0, 0.0), (PI / 2.0, PI / 2.0)] {
            let img = normalize_default(&stripe_image(128, 128, angle, 10.0)).unwrap();
            let field = estimate_orientation_field(&img, 16).unwrap();
            for (bx, by) in interior_blocks(&field) {
                assert!(orientation_diff(field.angle(bx, by), expect) < 0.05);
                assert!(field.coherence_at(bx, by) > 0.9);
            }
        }
    }

    #[test]
    fn orientation_is_rotation_equivariant() {
        for i in 0..12 {
            let base = 0.1 + i as f64 * 0.26;
            let delta = 0.7;
            let a = estimate_orientation_field(&stripe_image(128, 128, base, 9.0), 16).unwrap();
            let b = estimate_orientation_field(&stripe_image(128, 128, base + delta, 9.0), 16).unwrap();
            for (bx, by) in interior_blocks(&a) {
                let rotated = wrap_pi(a.angle(bx, by) + delta);
                assert!(orientation_diff(rotated, b.angle(bx, by)) < 0.05);
            }
        }
    }

    #[test]
    fn white_noise_has_low_coherence() {
        let mut rng = crate::seed::rng(5);
        let mut total = 0.0;
        let runs = 100;
        for _ in 0..runs {
            let img = FingerprintImage::from_fn(64, 64, |_, _| rng.random_range(0..=255));
            let field = estimate_orientation_field(&img, 16).unwrap();
            total += field.coherence.iter().sum::<f64>() / field.coherence.len() as f64;
        }
        assert!(total / (runs as f64) < 0.3);
    }

    #[test]
    fn orientation_ranges_hold() {
        let mut rng = crate::seed::rng(9);
        let img = FingerprintImage::from_fn(70, 45, |_, _| rng.random_range(0..=255));
        let field = estimate_orientation_field(&img, 12).unwrap();
        assert_eq!((field.cols, field.rows), (6, 4));
        assert!(field.angles.iter().all(|a| (0.0..PI).contains(a)));
        assert!(field.coherence.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!(estimate_orientation_field(&img, 7).is_err());
    }

    #[test]
    fn segmentation_of_constant_and_half_images() {
        let blank = FingerprintImage::filled(64, 64, 200);
        let mask = segment_foreground(&blank, 16).unwrap();
        assert_eq!(mask.foreground_fraction(), 0.0);

        let stripes = stripe_image(128, 128, 0.4, 9.0);
        let half = FingerprintImage::from_fn(128, 128, |x, y| if x < 64 { stripes.get(x, y) } else { 255 });
        let half = normalize_default(&half).unwrap();
        let mask = segment_foreground(&half, 16).unwrap();
        assert!((mask.foreground_fraction() - 0.5).abs() <= 0.15);
        assert_eq!(mask, segment_foreground(&half, 16).unwrap());
    }

    #[test]
    fn mask_dimensions_round_up() {
        let img = FingerprintImage::filled(70, 33, 10);
        let mask = segment_foreground(&img, 16).unwrap();
        assert_eq!((mask.cols, mask.rows, mask.mask.len()), (5, 3, 15));
    }
}
