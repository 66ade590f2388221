//! Parametric spoof degradation: elastic warp, blob dropouts, blur, contrast
//! compression and sensor noise, all scaled by one severity value.
//!
//! Random draws depend only on the seed, never on the severity, so sweeping
//! the severity for a fixed seed degrades the same structures progressively.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::imgcore::filter::{gaussian_blur, Plane};
use crate::imgcore::FingerprintImage;
use crate::seed;

/// Severity added for fakes lifted without the user's cooperation.
pub const NONCOOP_INCREMENT: f64 = 0.15;
/// Peak elastic displacement at full severity, in pixels.
pub const MAX_WARP: f64 = 3.0;
const MAX_BLUR_SIGMA: f64 = 2.0;
const MAX_CONTRAST_LOSS: f64 = 0.75;
const MAX_NOISE_SD: f64 = 22.0;
const BLOBS: usize = 14;
/// Short bright/dark strokes (ridge breaks and bridges) at full severity.
const MAX_DEFECTS: usize = 300;
const WARP_WAVES: usize = 3;
/// Range of the per-fake exponent applied to the severity seen by the
/// capture-quality operators. Endpoints 0 and 1 are unaffected.
const SUSCEPTIBILITY: (f64, f64) = (0.6, 1.6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cooperation {
    Cooperative,
    NonCooperative,
}

impl Cooperation {
    pub fn label(self) -> &'static str {
        match self {
            Cooperation::Cooperative => "coop",
            Cooperation::NonCooperative => "noncoop",
        }
    }
}

/// Effective severity for a fake made in `coop` mode.
pub fn severity(penalty: f64, coop: Cooperation, noncoop_increment: f64) -> f64 {
    let extra = match coop {
        Cooperation::Cooperative => 0.0,
        Cooperation::NonCooperative => noncoop_increment,
    };
    (penalty + extra).clamp(0.0, 1.0)
}

/// Degrades a capture into a spoof-like capture. Penalty 0 in cooperative
/// mode returns the input unchanged.
pub fn degrade_to_fake(img: &FingerprintImage, penalty: f64, coop: Cooperation, seed: u64) -> FingerprintImage {
    degrade_with_severity(img, severity(penalty, coop, NONCOOP_INCREMENT), seed)
}

struct Blob {
    x: f64,
    y: f64,
    radius: f64,
    /// Target intensity: bright (missing ridges) or dark (smeared ridges).
    level: f64,
}

struct Stroke {
    a: (f64, f64),
    b: (f64, f64),
    level: f64,
}

fn paint_stroke(plane: &mut Plane, stroke: &Stroke, half_width: f64) {
    let (w, h) = (plane.width as isize, plane.height as isize);
    let reach = half_width + 1.0;
    let x0 = (stroke.a.0.min(stroke.b.0) - reach).floor().max(0.0) as isize;
    let x1 = ((stroke.a.0.max(stroke.b.0) + reach).ceil() as isize).min(w - 1);
    let y0 = (stroke.a.1.min(stroke.b.1) - reach).floor().max(0.0) as isize;
    let y1 = ((stroke.a.1.max(stroke.b.1) + reach).ceil() as isize).min(h - 1);
    let (vx, vy) = (stroke.b.0 - stroke.a.0, stroke.b.1 - stroke.a.1);
    let len2 = (vx * vx + vy * vy).max(1e-12);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64 - stroke.a.0, y as f64 - stroke.a.1);
            let t = ((px * vx + py * vy) / len2).clamp(0.0, 1.0);
            let d = ((px - t * vx).powi(2) + (py - t * vy).powi(2)).sqrt();
            let weight = (reach - d).clamp(0.0, 1.0) as f32;
            if weight > 0.0 {
                let v = &mut plane.data[y as usize * plane.width + x as usize];
                *v += weight * (stroke.level as f32 - *v);
            }
        }
    }
}

pub fn degrade_with_severity(img: &FingerprintImage, severity: f64, seed: u64) -> FingerprintImage {
    let s = severity.clamp(0.0, 1.0);
    if s == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let mut rng = seed::rng(seed::derive(seed, &[0xde]));

    // Warp field: a few long-wavelength sinusoids per axis; amplitudes sum to 1.
    let mut waves = Vec::with_capacity(2 * WARP_WAVES);
    for _ in 0..2 * WARP_WAVES {
        let wavelength = rng.random_range(60.0..160.0);
        let dir: f64 = rng.random_range(0.0..2.0 * PI);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let k = 2.0 * PI / wavelength;
        waves.push((k * dir.cos(), k * dir.sin(), phase));
    }
    let blobs: Vec<Blob> = (0..BLOBS)
        .map(|i| Blob {
            x: rng.random_range(0.0..w as f64),
            y: rng.random_range(0.0..h as f64),
            radius: rng.random_range(10.0..28.0),
            level: if i % 2 == 0 { 235.0 } else { 60.0 },
        })
        .collect();
    let defects: Vec<Stroke> = (0..MAX_DEFECTS)
        .map(|i| {
            let dir: f64 = rng.random_range(0.0..PI);
            let len: f64 = rng.random_range(3.0..12.0);
            let (x, y) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
            Stroke {
                a: (x - 0.5 * len * dir.cos(), y - 0.5 * len * dir.sin()),
                b: (x + 0.5 * len * dir.cos(), y + 0.5 * len * dir.sin()),
                level: if i % 2 == 0 { 235.0 } else { 40.0 },
            }
        })
        .collect();
    let susceptibility = rng.random_range(SUSCEPTIBILITY.0..SUSCEPTIBILITY.1);
    let noise_seed = rng.random::<u64>();
    // Severity seen by the capture-quality operators.
    let sq = s.powf(susceptibility);

    let src = img.to_plane();
    let amp = MAX_WARP * s / WARP_WAVES as f64;
    let mut plane = Plane::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let (mut dx, mut dy) = (0.0, 0.0);
        for (i, &(kx, ky, phase)) in waves.iter().enumerate() {
            let v = amp * (kx * xf + ky * yf + phase).sin();
            if i < WARP_WAVES {
                dx += v;
            } else {
                dy += v;
            }
        }
        let sx = (xf + dx).clamp(0.0, (w - 1) as f64) as f32;
        let sy = (yf + dy).clamp(0.0, (h - 1) as f64) as f32;
        src.sample(sx, sy).expect("clamped inside raster")
    });

    for blob in &blobs {
        let r = blob.radius * s;
        if r < 1.0 {
            continue;
        }
        let x0 = (blob.x - r).floor().max(0.0) as usize;
        let x1 = ((blob.x + r).ceil() as usize).min(w - 1);
        let y0 = (blob.y - r).floor().max(0.0) as usize;
        let y1 = ((blob.y + r).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = ((x as f64 - blob.x).powi(2) + (y as f64 - blob.y).powi(2)).sqrt() / r;
                if d < 1.0 {
                    // Smooth falloff towards the rim.
                    let t = 1.0 - d * d;
                    let weight = (t * t * (3.0 - 2.0 * t)) as f32;
                    let v = &mut plane.data[y * w + x];
                    *v += weight * (blob.level as f32 - *v);
                }
            }
        }
    }

    let active = (MAX_DEFECTS as f64 * sq).round() as usize;
    for stroke in &defects[..active] {
        paint_stroke(&mut plane, stroke, 1.2);
    }

    let plane = gaussian_blur(&plane, (MAX_BLUR_SIGMA * sq) as f32);
    let mean = plane.data.iter().map(|&v| v as f64).sum::<f64>() / plane.data.len() as f64;
    let gain = 1.0 - MAX_CONTRAST_LOSS * sq;
    let noise_sd = MAX_NOISE_SD * sq;
    let mut rng = seed::rng(noise_seed);
    let normal = Normal::new(0.0, noise_sd).unwrap();
    let pixels = plane
        .data
        .iter()
        .map(|&v| crate::imgcore::quantize(mean + (v as f64 - mean) * gain + normal.sample(&mut rng)))
        .collect();
    FingerprintImage::new(w, h, pixels, img.dpi).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdb::generator::{GeneratorParams, MasterPrint};

    fn print() -> FingerprintImage {
        MasterPrint::generate(&GeneratorParams::random(2, 128, 128), 128, 128)
            .unwrap()
            .base()
    }

    #[test]
    fn zero_penalty_cooperative_is_identity() {
        let img = print();
        assert_eq!(degrade_to_fake(&img, 0.0, Cooperation::Cooperative, 9), img);
    }

    #[test]
    fn noncooperative_adds_increment() {
        assert_eq!(severity(0.2, Cooperation::Cooperative, NONCOOP_INCREMENT), 0.2);
        assert!((severity(0.2, Cooperation::NonCooperative, NONCOOP_INCREMENT) - 0.35).abs() < 1e-12);
        assert_eq!(severity(0.95, Cooperation::NonCooperative, NONCOOP_INCREMENT), 1.0);
        let img = print();
        assert_ne!(degrade_to_fake(&img, 0.0, Cooperation::NonCooperative, 9), img);
    }

    #[test]
    fn deterministic_per_seed() {
        let img = print();
        assert_eq!(degrade_with_severity(&img, 0.4, 3), degrade_with_severity(&img, 0.4, 3));
        assert_ne!(degrade_with_severity(&img, 0.4, 3), degrade_with_severity(&img, 0.4, 4));
    }

    #[test]
    fn stroke_painting_stays_in_bounds() {
        let mut plane = Plane::new(10, 10, 0.0);
        let stroke = Stroke {
            a: (-5.0, -5.0),
            b: (15.0, 15.0),
            level: 200.0,
        };
        paint_stroke(&mut plane, &stroke, 1.2);
        assert_eq!(plane.get(5, 5), 200.0);
        assert_eq!(plane.get(9, 0), 0.0);
    }
}
