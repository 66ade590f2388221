//! Ridge-feature verification: an oriented Gabor filterbank, a rectangular
//! tessellation, per-cell response variances, and a distance matcher that
//! applies no rotation alignment.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imgcore::filter::{convolve_separable, Plane};
use crate::imgcore::{FingerprintImage, ForegroundMask};

pub const DEFAULT_FILTER_COUNT: usize = 8;
pub const DEFAULT_ANGLE_STEP: f64 = PI / 8.0;
pub const DEFAULT_FREQUENCY: f64 = 0.1;
pub const DEFAULT_SIGMA: f64 = 4.0;
pub const DEFAULT_GRID: usize = 8;

const RFV_MAGIC: &[u8; 4] = b"RFV1";

/// One even-symmetric Gabor kernel, stored both densely and as a rank-3
/// separable decomposition used for filtering.
#[derive(Debug, Clone)]
pub struct GaborKernel {
    pub orientation: f64,
    /// Dense `(2r+1)^2` taps, row-major.
    pub taps: Vec<f64>,
    cos_x: Vec<f32>,
    cos_y: Vec<f32>,
    sin_x: Vec<f32>,
    sin_y: Vec<f32>,
    dc: f32,
}

/// Bank of DC-free even Gabor filters sharing frequency and envelope.
#[derive(Debug, Clone)]
pub struct GaborBank {
    pub orientations: Vec<f64>,
    pub frequency: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub kernel_radius: usize,
    kernels: Vec<GaborKernel>,
}

impl GaborBank {
    pub fn count(&self) -> usize {
        self.orientations.len()
    }

    pub fn kernels(&self) -> &[GaborKernel] {
        &self.kernels
    }
}

impl Default for GaborBank {
    fn default() -> Self {
        build_gabor_bank(
            DEFAULT_FILTER_COUNT,
            DEFAULT_ANGLE_STEP,
            DEFAULT_FREQUENCY,
            DEFAULT_SIGMA,
        )
        .expect("default bank parameters are valid")
    }
}

/// Builds `count` filters at orientations `k * angle_step (mod pi)`.
///
/// A filter at orientation `theta` responds to ridges running along
/// `theta`; its carrier oscillates along the ridge normal.
pub fn build_gabor_bank(count: usize, angle_step: f64, frequency: f64, sigma: f64) -> Result<GaborBank> {
    if count == 0 {
        return Err(Error::param("filter count must be at least 1"));
    }
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(Error::param("Gabor frequency must be positive"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param("Gabor sigma must be positive"));
    }
    let orientations: Vec<f64> = (0..count)
        .map(|k| crate::imgcore::wrap_pi(k as f64 * angle_step))
        .collect();
    for (i, a) in orientations.iter().enumerate() {
        if orientations[..i]
            .iter()
            .any(|b| crate::imgcore::orientation_diff(*a, *b) < 1e-9)
        {
            return Err(Error::param(format!(
                "angle step {angle_step} produces duplicate orientations"
            )));
        }
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let kernels = orientations
        .iter()
        .map(|&theta| gabor_kernel(theta, frequency, sigma, radius))
        .collect();
    Ok(GaborBank {
        orientations,
        frequency,
        sigma_x: sigma,
        sigma_y: sigma,
        kernel_radius: radius,
        kernels,
    })
}

fn gabor_kernel(theta: f64, frequency: f64, sigma: f64, radius: usize) -> GaborKernel {
    let r = radius as isize;
    // Carrier phase a*x + b*y along the ridge normal (-sin, cos).
    let a = -2.0 * PI * frequency * theta.sin();
    let b = 2.0 * PI * frequency * theta.cos();
    let gauss = |i: isize| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp();
    let side: Vec<isize> = (-r..=r).collect();
    let n = side.len();
    let mut taps = Vec::with_capacity(n * n);
    for &y in &side {
        for &x in &side {
            taps.push(gauss(x) * gauss(y) * (a * x as f64 + b * y as f64).cos());
        }
    }
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| *t -= mean);
    let cos_x = side.iter().map(|&i| (gauss(i) * (a * i as f64).cos()) as f32).collect();
    let sin_x = side.iter().map(|&i| (gauss(i) * (a * i as f64).sin()) as f32).collect();
    let cos_y = side.iter().map(|&i| (gauss(i) * (b * i as f64).cos()) as f32).collect();
    let sin_y = side.iter().map(|&i| (gauss(i) * (b * i as f64).sin()) as f32).collect();
    GaborKernel {
        orientation: theta,
        taps,
        cos_x,
        cos_y,
        sin_x,
        sin_y,
        dc: mean as f32,
    }
}

impl GaborKernel {
    /// Filter response over the whole raster, borders clamped.
    pub fn apply(&self, src: &Plane) -> Plane {
        let cc = convolve_separable(src, &self.cos_x, &self.cos_y);
        let ss = convolve_separable(src, &self.sin_x, &self.sin_y);
        let ones = vec![1.0f32; self.cos_x.len()];
        let boxed = convolve_separable(src, &ones, &ones);
        let data = cc
            .data
            .iter()
            .zip(&ss.data)
            .zip(&boxed.data)
            .map(|((c, s), m)| c - s - self.dc * m)
            .collect();
        Plane {
            width: src.width,
            height: src.height,
            data,
        }
    }
}

/// Per-(filter, cell) response variances over a rectangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFeatureVector {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub filter_count: usize,
    /// Indexed `[filter][row][col]`.
    pub values: Vec<f64>,
    /// Indexed `[row][col]`.
    pub cell_validity: Vec<bool>,
}

impl RidgeFeatureVector {
    pub fn cells(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn value(&self, filter: usize, row: usize, col: usize) -> f64 {
        self.values[filter * self.cells() + row * self.grid_cols + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.cell_validity[row * self.grid_cols + col]
    }

    fn check(&self) -> Result<()> {
        let cells = self.grid_rows * self.grid_cols;
        if self.values.len() != self.filter_count * cells || self.cell_validity.len() != cells {
            return Err(Error::Shape(
                "feature vector length does not match its dimensions".into(),
            ));
        }
        Ok(())
    }

    /// `RFV1` container: magic, `u32` rows/cols/filters, `f64` values, then one
    /// validity byte per cell. All little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.values.len() * 8 + self.cell_validity.len());
        out.extend_from_slice(RFV_MAGIC);
        for d in [self.grid_rows, self.grid_cols, self.filter_count] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.cell_validity.iter().map(|&b| b as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != RFV_MAGIC {
            return Err(Error::Format("missing RFV1 header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (grid_rows, grid_cols, filter_count) = (dim(0), dim(1), dim(2));
        let cells = grid_rows * grid_cols;
        let n = filter_count * cells;
        if bytes.len() != 16 + n * 8 + cells {
            return Err(Error::Format(format!(
                "RFV1 payload length {} does not match dimensions",
                bytes.len()
            )));
        }
        let values = bytes[16..16 + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let cell_validity = bytes[16 + n * 8..]
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Format("invalid cell validity byte".into())),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            grid_rows,
            grid_cols,
            filter_count,
            values,
            cell_validity,
        })
    }

    /// `filter,row,col,valid,value` rows for inspection.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("filter,row,col,valid,value\n");
        for f in 0..self.filter_count {
            for r in 0..self.grid_rows {
                for c in 0..self.grid_cols {
                    let _ = writeln!(out, "{f},{r},{c},{},{}", self.is_valid(r, c) as u8, self.value(f, r, c));
                }
            }
        }
        out
    }
}

/// Cell `[start, end)` spans along one axis; the last cell absorbs the remainder.
fn cell_spans(len: usize, cells: usize) -> Vec<(usize, usize)> {
    let step = len / cells;
    (0..cells)
        .map(|i| (i * step, if i + 1 == cells { len } else { (i + 1) * step }))
        .collect()
}

pub fn extract_ridge_features(
    img: &FingerprintImage,
    bank: &GaborBank,
    grid_rows: usize,
    grid_cols: usize,
    mask: &ForegroundMask,
) -> Result<RidgeFeatureVector> {
    img.check_size()?;
    if grid_rows == 0 || grid_cols == 0 {
        return Err(Error::param("grid dimensions must be at least 1"));
    }
    if img.width() < grid_cols || img.height() < grid_rows {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: grid_rows.max(grid_cols),
        });
    }
    let rows = cell_spans(img.height(), grid_rows);
    let cols = cell_spans(img.width(), grid_cols);

    let mut cell_validity = Vec::with_capacity(grid_rows * grid_cols);
    for &(y0, y1) in &rows {
        for &(x0, x1) in &cols {
            let mut fg = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    fg += mask.contains_pixel(x, y) as usize;
                }
            }
            cell_validity.push(2 * fg >= (y1 - y0) * (x1 - x0));
        }
    }

    let plane = img.to_plane();
    let cells = grid_rows * grid_cols;
    let mut values = vec![0.0f64; bank.count() * cells];
    let any_valid = cell_validity.iter().any(|&v| v);
    for (f, kernel) in bank.kernels.iter().enumerate() {
        if !any_valid {
            break;
        }
        let response = kernel.apply(&plane);
        for (ri, &(y0, y1)) in rows.iter().enumerate() {
            for (ci, &(x0, x1)) in cols.iter().enumerate() {
                if !cell_validity[ri * grid_cols + ci] {
                    continue;
                }
                values[f * cells + ri * grid_cols + ci] = region_variance(&response, x0, y0, x1, y1);
            }
        }
    }
    Ok(RidgeFeatureVector {
        grid_rows,
        grid_cols,
        filter_count: bank.count(),
        values,
        cell_validity,
    })
}

fn region_variance(p: &Plane, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let mut sum = 0.0f64;
    for y in y0..y1 {
        sum += p.data[y * p.width + x0..y * p.width + x1]
            .iter()
            .map(|&v| v as f64)
            .sum::<f64>();
    }
    let mean = sum / n;
    let mut ss = 0.0f64;
    for y in y0..y1 {
        ss += p.data[y * p.width + x0..y * p.width + x1]
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>();
    }
    ss / n
}

/// Similarity `1 / (1 + d)` between L2-normalized vectors restricted to the
/// cells valid in both inputs; `0` when no cell is shared.
pub fn match_ridge(a: &RidgeFeatureVector, b: &RidgeFeatureVector) -> Result<f64> {
    a.check()?;
    b.check()?;
    if (a.grid_rows, a.grid_cols, a.filter_count) != (b.grid_rows, b.grid_cols, b.filter_count) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.filter_count, a.grid_rows, a.grid_cols, b.filter_count, b.grid_rows, b.grid_cols
        )));
    }
    let cells = a.cells();
    let shared: Vec<usize> = (0..cells)
        .filter(|&c| a.cell_validity[c] && b.cell_validity[c])
        .collect();
    if shared.is_empty() {
        return Ok(0.0);
    }
    let indices = || (0..a.filter_count).flat_map(|f| shared.iter().map(move |&c| f * cells + c));
    let norm = |v: &RidgeFeatureVector| {
        let n = indices().map(|i| v.values[i] * v.values[i]).sum::<f64>().sqrt();
        if n > 0.0 {
            n
        } else {
            1.0
        }
    };
    let (na, nb) = (norm(a), norm(b));
    let d2: f64 = indices()
        .map(|i| {
            let d = a.values[i] / na - b.values[i] / nb;
            d * d
        })
        .sum();
    Ok(1.0 / (1.0 + d2.sqrt()))
}
