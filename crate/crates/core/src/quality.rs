//! Five-level image quality assessor built from three transparent
//! components: ridge-flow coherence, gray-level contrast and foreground
//! coverage. Level 1 is the best quality, level 5 the worst.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::filter::gaussian_blur;
use crate::imgcore::{estimate_orientation_field, segment_foreground, FingerprintImage};

/// Level thresholds on the raw score, best level first. Calibrated on the
/// synthetic generator: pristine prints land in levels 1-2, fully degraded
/// ones in levels 4-5.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.80, 0.70, 0.55, 0.40];
pub const DEFAULT_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];
const BLOCK: usize = 16;
/// Smoothing applied before segmentation so sensor noise alone does not
/// count as ridge area.
const SEGMENT_SMOOTHING: f32 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QualityLevel(u8);

impl QualityLevel {
    pub const BEST: QualityLevel = QualityLevel(1);
    pub const WORST: QualityLevel = QualityLevel(5);

    pub fn new(level: u8) -> Result<Self> {
        if (1..=5).contains(&level) {
            Ok(Self(level))
        } else {
            Err(Error::param(format!("quality level {level} outside 1..=5")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for QualityLevel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QualityLevel> for u8 {
    fn from(l: QualityLevel) -> u8 {
        l.0
    }
}

impl std::fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QualityComponents {
    pub coherence_mean: f64,
    pub contrast: f64,
    pub foreground_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QualityScore {
    pub raw: f64,
    pub components: QualityComponents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityConfig {
    /// Weights of coherence, contrast and foreground ratio; non-negative,
    /// summing to 1.
    pub weights: [f64; 3],
    /// Strictly decreasing raw-score cut points for levels 1..4.
    pub thresholds: [f64; 4],
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            weights: DEFAULT_WEIGHTS,
            thresholds: DEFAULT_THRESHOLDS,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::param("quality weights must be non-negative and sum to 1"));
        }
        if self.thresholds.windows(2).any(|p| !(p[0] > p[1])) {
            return Err(Error::param("quality thresholds must be strictly decreasing"));
        }
        Ok(())
    }

    pub fn level(&self, raw: f64) -> QualityLevel {
        let idx = self.thresholds.iter().position(|&t| raw >= t).unwrap_or(4);
        QualityLevel(idx as u8 + 1)
    }
}

pub fn assess_quality(img: &FingerprintImage) -> Result<(QualityScore, QualityLevel)> {
    assess_quality_with(img, &QualityConfig::default())
}

pub fn assess_quality_with(img: &FingerprintImage, cfg: &QualityConfig) -> Result<(QualityScore, QualityLevel)> {
    cfg.validate()?;
    img.check_size()?;
    let components = components(img)?;
    let raw = cfg.weights[0] * components.coherence_mean
        + cfg.weights[1] * components.contrast
        + cfg.weights[2] * components.foreground_ratio;
    let score = QualityScore { raw, components };
    Ok((score, cfg.level(raw)))
}

fn components(img: &FingerprintImage) -> Result<QualityComponents> {
    let smooth = FingerprintImage::from_plane(&gaussian_blur(&img.to_plane(), SEGMENT_SMOOTHING), img.dpi);
    let mask = segment_foreground(&smooth, BLOCK)?;
    let fg_blocks: Vec<(usize, usize)> = (0..mask.rows)
        .flat_map(|by| (0..mask.cols).map(move |bx| (bx, by)))
        .filter(|&(bx, by)| mask.get(bx, by))
        .collect();
    if fg_blocks.is_empty() {
        return Ok(QualityComponents::default());
    }
    let field = estimate_orientation_field(img, BLOCK)?;
    let coherence_mean = fg_blocks
        .iter()
        .map(|&(bx, by)| field.coherence_at(bx, by))
        .sum::<f64>()
        / fg_blocks.len() as f64;

    let mut hist = [0usize; 256];
    let mut n = 0usize;
    for &(bx, by) in &fg_blocks {
        for y in by * BLOCK..((by + 1) * BLOCK).min(img.height()) {
            for x in bx * BLOCK..((bx + 1) * BLOCK).min(img.width()) {
                hist[img.get(x, y) as usize] += 1;
                n += 1;
            }
        }
    }
    let quantile = |q: f64| {
        let target = (q * (n - 1) as f64).round() as usize;
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            if acc > target {
                return v as f64;
            }
        }
        255.0
    };
    let contrast = (quantile(0.75) - quantile(0.25)) / 255.0;

    Ok(QualityComponents {
        coherence_mean: coherence_mean.clamp(0.0, 1.0),
        contrast: contrast.clamp(0.0, 1.0),
        foreground_ratio: mask.foreground_fraction(),
    })
}

/// Counts per level 1..=5.
pub fn quality_histogram(levels: &[QualityLevel]) -> [usize; 5] {
    let mut counts = [0; 5];
    for l in levels {
        counts[l.0 as usize - 1] += 1;
    }
    counts
}
