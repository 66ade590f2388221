//! Master ridge-pattern synthesis and impression rendering.
//!
//! A finger identity is an orientation field built from singular points
//! (zero-pole model) plus a ridge pattern grown from random seeds by
//! repeated orientation-adaptive Gabor filtering. Impressions re-sample that
//! master pattern under a rigid transform.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imgcore::filter::{gaussian_blur, Plane};
use crate::imgcore::{quantize, FingerprintImage};
use crate::seed;

/// Extra canvas around the rendered frame so jittered impressions stay on
/// the pattern.
const MARGIN: usize = 24;
const ORIENTATION_BINS: usize = 144;
const GROWTH_ITERATIONS: usize = 14;
const VALLEY_LEVEL: f64 = 225.0;
const RIDGE_LEVEL: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SingularKind {
    Loop,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPoint {
    pub kind: SingularKind,
    pub x: f64,
    pub y: f64,
}

/// Bounds for per-impression variability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpressionJitter {
    pub max_translation: f64,
    pub max_rotation: f64,
    /// Maximum relative loss of ridge/valley contrast.
    pub contrast_jitter: f64,
    /// Maximum standard deviation of per-capture sensor noise, in gray levels.
    pub sensor_noise: f64,
}

impl ImpressionJitter {
    pub const NONE: ImpressionJitter = ImpressionJitter {
        max_translation: 0.0,
        max_rotation: 0.0,
        contrast_jitter: 0.0,
        sensor_noise: 0.0,
    };
}

impl Default for ImpressionJitter {
    fn default() -> Self {
        Self {
            max_translation: 10.0,
            max_rotation: 0.12,
            contrast_jitter: 0.2,
            sensor_noise: 6.0,
        }
    }
}

/// Identity and rendering parameters of one synthetic finger.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub seed: u64,
    /// Ridge period in pixels, within `[6, 14]`.
    pub ridge_period: f64,
    /// Field orientation far from the singular points (radians).
    pub base_orientation: f64,
    pub singular_points: Vec<SingularPoint>,
    /// Skin texture noise, `[0, 1]`.
    pub noise_level: f64,
    pub impression_jitter: ImpressionJitter,
}

impl GeneratorParams {
    /// Plain stripes at `orientation` with no singular points.
    pub fn stripes(seed: u64, orientation: f64) -> Self {
        Self {
            seed,
            ridge_period: 10.0,
            base_orientation: orientation,
            singular_points: Vec::new(),
            noise_level: 0.0,
            impression_jitter: ImpressionJitter::default(),
        }
    }

    /// Draws a random finger identity (pattern class, singular points,
    /// ridge period) for a `width x height` frame.
    pub fn random(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = seed::rng(seed::derive(seed, &[0x1d]));
        let (w, h) = (width as f64, height as f64);
        let (cx, cy) = (w * rng.random_range(0.4..0.6), h * rng.random_range(0.3..0.5));
        let mut singular_points = Vec::new();
        let class = rng.random_range(0..10);
        let sp = |kind, x: f64, y: f64| SingularPoint {
            kind,
            x: x.clamp(0.0, w - 1.0),
            y: y.clamp(0.0, h - 1.0),
        };
        match class {
            // arch: no singular points
            0 => {}
            // loops (left / right), most frequent class
            1..=6 => {
                let side = if class % 2 == 0 { 1.0 } else { -1.0 };
                singular_points.push(sp(SingularKind::Loop, cx, cy));
                singular_points.push(sp(
                    SingularKind::Delta,
                    cx + side * w * rng.random_range(0.2..0.35),
                    cy + h * rng.random_range(0.3..0.45),
                ));
            }
            // whorl
            7 | 8 => {
                let dx = w * rng.random_range(0.02..0.06);
                singular_points.push(sp(SingularKind::Loop, cx - dx, cy));
                singular_points.push(sp(SingularKind::Loop, cx + dx, cy + h * 0.05));
                singular_points.push(sp(SingularKind::Delta, cx - w * 0.3, cy + h * 0.4));
                singular_points.push(sp(SingularKind::Delta, cx + w * 0.3, cy + h * 0.42));
            }
            // tented arch
            _ => {
                singular_points.push(sp(SingularKind::Loop, cx, cy));
                singular_points.push(sp(SingularKind::Delta, cx + w * 0.02, cy + h * 0.25));
            }
        }
        Self {
            seed,
            ridge_period: rng.random_range(8.5..11.0),
            base_orientation: rng.random_range(-0.25..0.25f64).rem_euclid(PI),
            singular_points,
            noise_level: rng.random_range(0.0..0.1),
            impression_jitter: ImpressionJitter::default(),
        }
    }

    fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(6.0..=14.0).contains(&self.ridge_period) {
            return Err(Error::param(format!(
                "ridge period {} outside [6, 14]",
                self.ridge_period
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::param("noise level outside [0, 1]"));
        }
        for p in &self.singular_points {
            if !(p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64) {
                return Err(Error::param(format!(
                    "singular point ({}, {}) outside the image",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    /// Ridge orientation of the constructed field at frame coordinates.
    pub fn orientation_at(&self, x: f64, y: f64) -> f64 {
        let mut theta = self.base_orientation;
        for p in &self.singular_points {
            let arg = (y - p.y).atan2(x - p.x);
            match p.kind {
                SingularKind::Loop => theta += 0.5 * arg,
                SingularKind::Delta => theta -= 0.5 * arg,
            }
        }
        crate::imgcore::wrap_pi(theta)
    }
}

/// Grown ridge pattern for one identity, on a canvas larger than the frame.
#[derive(Debug, Clone)]
pub struct MasterPrint {
    pub params: GeneratorParams,
    pub width: usize,
    pub height: usize,
    /// Ridge pattern in `[-1, 1]` (1 = ridge), canvas coordinates.
    pattern: Plane,
    /// Identity-bound skin texture, canvas coordinates.
    texture: Plane,
}

/// Rigid placement of the finger on the sensor, about the frame centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
    /// Multiplier on ridge/valley contrast, `(0, 1]`.
    pub contrast: f64,
    pub sensor_noise: f64,
    pub noise_seed: u64,
}

impl Placement {
    pub const IDENTITY: Placement = Placement {
        rotation: 0.0,
        dx: 0.0,
        dy: 0.0,
        contrast: 1.0,
        sensor_noise: 0.0,
        noise_seed: 0,
    };
}

fn synthesis_kernels(period: f64) -> (usize, Vec<Vec<f32>>) {
    let sigma = 0.42 * period;
    let radius = (1.8 * sigma).round() as isize;
    let n = (2 * radius + 1) as usize;
    let freq = 1.0 / period;
    let kernels = (0..ORIENTATION_BINS)
        .map(|b| {
            let theta = b as f64 * PI / ORIENTATION_BINS as f64;
            let (nx, ny) = (-theta.sin(), theta.cos());
            let mut taps = Vec::with_capacity(n * n);
            for v in -radius..=radius {
                for u in -radius..=radius {
                    let (u, v) = (u as f64, v as f64);
                    let g = (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
                    taps.push(g * (2.0 * PI * freq * (u * nx + v * ny)).cos());
                }
            }
            let mean = taps.iter().sum::<f64>() / taps.len() as f64;
            taps.into_iter().map(|t| (t - mean) as f32).collect()
        })
        .collect();
    (radius as usize, kernels)
}

fn grow_pattern(params: &GeneratorParams, cw: usize, ch: usize) -> Plane {
    let mut rng = seed::rng(seed::derive(params.seed, &[0x9a]));
    let (radius, kernels) = synthesis_kernels(params.ridge_period);
    let bins: Vec<u8> = (0..cw * ch)
        .map(|i| {
            let (x, y) = ((i % cw) as f64 - MARGIN as f64, (i / cw) as f64 - MARGIN as f64);
            let theta = params.orientation_at(x, y);
            ((theta / PI * ORIENTATION_BINS as f64).round() as usize % ORIENTATION_BINS) as u8
        })
        .collect();

    let mut current = Plane::new(cw, ch, 0.0);
    let spacing = params.ridge_period * 3.0;
    let seeds = ((cw * ch) as f64 / (spacing * spacing)).ceil() as usize;
    for _ in 0..seeds {
        let x = rng.random_range(0..cw);
        let y = rng.random_range(0..ch);
        current.data[y * cw + x] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }

    let n = 2 * radius + 1;
    let r = radius as isize;
    let mut next = Plane::new(cw, ch, 0.0);
    for _ in 0..GROWTH_ITERATIONS {
        for y in 0..ch {
            for x in 0..cw {
                let kernel = &kernels[bins[y * cw + x] as usize];
                let mut acc = 0.0f32;
                let inner = x >= radius && x + radius < cw;
                for j in 0..n {
                    let yy = y as isize + j as isize - r;
                    if yy < 0 || yy >= ch as isize {
                        continue;
                    }
                    let row_k = &kernel[j * n..(j + 1) * n];
                    let base = yy as usize * cw;
                    if inner {
                        let row = &current.data[base + x - radius..base + x + radius + 1];
                        acc += row_k.iter().zip(row).map(|(a, b)| a * b).sum::<f32>();
                    } else {
                        for (i, &k) in row_k.iter().enumerate() {
                            let xx = x as isize + i as isize - r;
                            if xx >= 0 && xx < cw as isize {
                                acc += k * current.data[base + xx as usize];
                            }
                        }
                    }
                }
                next.data[y * cw + x] = acc;
            }
        }
        let scale = next.data.iter().map(|v| v.abs()).fold(0.0f32, f32::max);
        if scale > 0.0 {
            let gain = 6.0 / scale;
            for v in next.data.iter_mut() {
                *v = (*v * gain).clamp(-1.0, 1.0);
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    gaussian_blur(&current, 0.7)
}

impl MasterPrint {
    /// Grows the master pattern for a `width x height` frame.
    pub fn generate(params: &GeneratorParams, width: usize, height: usize) -> Result<Self> {
        params.validate(width, height)?;
        if width < crate::imgcore::MIN_DIM || height < crate::imgcore::MIN_DIM {
            return Err(Error::ImageTooSmall {
                width,
                height,
                min: crate::imgcore::MIN_DIM,
            });
        }
        let (cw, ch) = (width + 2 * MARGIN, height + 2 * MARGIN);
        let pattern = grow_pattern(params, cw, ch);
        let mut rng = seed::rng(seed::derive(params.seed, &[0x7e]));
        let normal = Normal::new(0.0f32, 1.0).unwrap();
        let raw = Plane::from_fn(cw, ch, |_, _| normal.sample(&mut rng));
        let mut texture = gaussian_blur(&raw, 1.0);
        // Blurring shrinks the variance; restore unit scale.
        let sd = (texture.data.iter().map(|v| v * v).sum::<f32>() / texture.data.len() as f32).sqrt();
        texture.data.iter_mut().for_each(|v| *v /= sd.max(1e-6));
        Ok(Self {
            params: params.clone(),
            width,
            height,
            pattern,
            texture,
        })
    }

    /// Ridge pattern value at frame coordinates (1 = ridge centre), if the
    /// point lies on the canvas.
    pub fn pattern_at(&self, x: f64, y: f64) -> Option<f32> {
        self.pattern
            .sample((x + MARGIN as f64) as f32, (y + MARGIN as f64) as f32)
    }

    /// Renders one capture of the finger.
    pub fn render(&self, placement: &Placement) -> FingerprintImage {
        let (cx, cy) = ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0);
        let (s, c) = placement.rotation.sin_cos();
        let amplitude = (VALLEY_LEVEL - RIDGE_LEVEL) * placement.contrast.clamp(0.0, 1.0);
        let mid = (VALLEY_LEVEL + RIDGE_LEVEL) / 2.0;
        let texture_sd = 60.0 * self.params.noise_level;
        let mut rng = seed::rng(placement.noise_seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let identity = placement.rotation == 0.0 && placement.dx == 0.0 && placement.dy == 0.0;
        let mut pixels = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                // Inverse placement: frame pixel -> finger coordinates.
                let (px, py) = (x as f64 - cx - placement.dx, y as f64 - cy - placement.dy);
                let (sx, sy) = if identity {
                    (x as f64, y as f64)
                } else {
                    (c * px + s * py + cx, -s * px + c * py + cy)
                };
                let (ux, uy) = ((sx + MARGIN as f64) as f32, (sy + MARGIN as f64) as f32);
                let mut v = match (self.pattern.sample(ux, uy), self.texture.sample(ux, uy)) {
                    (Some(p), Some(t)) => mid - 0.5 * amplitude * p as f64 + texture_sd * t as f64,
                    _ => VALLEY_LEVEL + 15.0,
                };
                if placement.sensor_noise > 0.0 {
                    v += placement.sensor_noise * normal.sample(&mut rng);
                }
                pixels.push(quantize(v));
            }
        }
        FingerprintImage::new(self.width, self.height, pixels, 500).expect("buffer sized to frame")
    }

    /// Draws a placement within the identity's jitter bounds.
    pub fn draw_placement(&self, jitter_seed: u64) -> Placement {
        draw_placement(&self.params.impression_jitter, jitter_seed)
    }

    /// Base rendering: identity placement, no sensor noise.
    pub fn base(&self) -> FingerprintImage {
        self.render(&Placement::IDENTITY)
    }

    /// One impression with jitter drawn from `jitter_seed`.
    pub fn impression(&self, jitter_seed: u64) -> FingerprintImage {
        self.render(&self.draw_placement(jitter_seed))
    }
}

pub fn draw_placement(jitter: &ImpressionJitter, jitter_seed: u64) -> Placement {
    let mut rng = seed::rng(seed::derive(jitter_seed, &[0x3c]));
    let mut sym = |bound: f64| {
        if bound > 0.0 {
            rng.random_range(-bound..=bound)
        } else {
            0.0
        }
    };
    let rotation = sym(jitter.max_rotation);
    let dx = sym(jitter.max_translation);
    let dy = sym(jitter.max_translation);
    let contrast = 1.0 - sym(jitter.contrast_jitter).abs();
    let sensor_noise = sym(jitter.sensor_noise).abs();
    Placement {
        rotation,
        dx,
        dy,
        contrast,
        sensor_noise,
        noise_seed: seed::derive(jitter_seed, &[0x4d]),
    }
}

/// Base rendering of a synthetic fingerprint.
pub fn generate_fingerprint(params: &GeneratorParams, width: usize, height: usize) -> Result<FingerprintImage> {
    Ok(MasterPrint::generate(params, width, height)?.base())
}

/// Renders one impression of the finger described by `params`.
pub fn impression(params: &GeneratorParams, width: usize, height: usize, jitter_seed: u64) -> Result<FingerprintImage> {
    Ok(MasterPrint::generate(params, width, height)?.impression(jitter_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{estimate_orientation_field, orientation_diff, OrientationField};

    /// Circular mean of block orientations (doubled-angle average).
    fn mean_orientation(field: &OrientationField, interior: usize) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for by in interior..field.rows - interior {
            for bx in interior..field.cols - interior {
                let a = field.angle(bx, by);
                c += (2.0 * a).cos();
                s += (2.0 * a).sin();
            }
        }
        crate::imgcore::wrap_pi(0.5 * s.atan2(c))
    }

    #[test]
    fn same_params_same_image() {
        let p = GeneratorParams::random(5, 128, 128);
        assert_eq!(
            generate_fingerprint(&p, 128, 128).unwrap(),
            generate_fingerprint(&p, 128, 128).unwrap()
        );
    }

    #[test]
    fn stripes_follow_requested_orientation() {
        for &theta in &[0.0, 0.5, 1.2, 2.6] {
            let img = generate_fingerprint(&GeneratorParams::stripes(3, theta), 256, 256).unwrap();
            let field = estimate_orientation_field(&img, 16).unwrap();
            let err = orientation_diff(mean_orientation(&field, 1), theta);
            assert!(err < 0.05, "theta {theta}: error {err}");
        }
    }

    #[test]
    fn zero_jitter_impression_is_base() {
        let mut p = GeneratorParams::random(8, 96, 96);
        p.impression_jitter = ImpressionJitter::NONE;
        let m = MasterPrint::generate(&p, 96, 96).unwrap();
        assert_eq!(m.impression(1), m.base());
        assert_eq!(m.impression(2), m.base());
    }

    #[test]
    fn impressions_differ_pixelwise() {
        let m = MasterPrint::generate(&GeneratorParams::random(8, 96, 96), 96, 96).unwrap();
        assert_ne!(m.impression(1), m.impression(2));
    }

    #[test]
    fn rotation_shifts_orientation_field() {
        let m = MasterPrint::generate(&GeneratorParams::stripes(4, 0.9), 192, 192).unwrap();
        let rotated = m.render(&Placement {
            rotation: 0.2,
            ..Placement::IDENTITY
        });
        let a = mean_orientation(&estimate_orientation_field(&m.base(), 16).unwrap(), 2);
        let b = mean_orientation(&estimate_orientation_field(&rotated, 16).unwrap(), 2);
        let d = orientation_diff(a, b);
        assert!((d - 0.2).abs() <= 0.05, "difference {d}");
    }

    #[test]
    fn out_of_bounds_singular_point_rejected() {
        let mut p = GeneratorParams::stripes(1, 0.0);
        p.singular_points.push(SingularPoint {
            kind: SingularKind::Loop,
            x: 500.0,
            y: 10.0,
        });
        assert!(matches!(generate_fingerprint(&p, 128, 128), Err(Error::Parameter(_))));
        let mut p = GeneratorParams::stripes(1, 0.0);
        p.ridge_period = 20.0;
        assert!(generate_fingerprint(&p, 128, 128).is_err());
    }

    #[test]
    fn random_params_are_valid() {
        for seed in 0..200 {
            let p = GeneratorParams::random(seed, 256, 256);
            p.validate(256, 256).unwrap();
        }
    }
}
