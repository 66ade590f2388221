//! Minutiae-based verification: crossing-number extraction on a thinned
//! ridge map and a matcher built only on relative distances and angles.

mod extract;
mod matcher;

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imgcore::wrap_2pi;

pub use extract::{extract_minutiae, extract_minutiae_with, ExtractConfig};
pub use matcher::{match_minutiae, match_minutiae_with, MatchConfig, PreparedTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MinutiaKind {
    Termination,
    Bifurcation,
}

impl MinutiaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MinutiaKind::Termination => "termination",
            MinutiaKind::Bifurcation => "bifurcation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    /// Direction in `[0, 2 pi)`.
    pub theta: f64,
    pub kind: MinutiaKind,
    /// `[0, 1]`, the orientation coherence around the minutia.
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinutiaTemplate {
    pub minutiae: Vec<Minutia>,
    pub source_dims: (usize, usize),
}

impl MinutiaTemplate {
    pub fn new(minutiae: Vec<Minutia>, source_dims: (usize, usize)) -> Self {
        Self { minutiae, source_dims }
    }

    pub fn empty(source_dims: (usize, usize)) -> Self {
        Self::new(Vec::new(), source_dims)
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    /// Text form: a `MINUTIAE v1 <count> <width> <height>` header, then one
    /// `x y theta_deg kind quality` line per minutia.
    pub fn to_text(&self) -> String {
        let (w, h) = self.source_dims;
        let mut out = format!("MINUTIAE v1 {} {} {}\n", self.minutiae.len(), w, h);
        for m in &self.minutiae {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                m.x,
                m.y,
                m.theta.to_degrees(),
                m.kind.as_str(),
                m.quality
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Format("empty template".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 5 || header[0] != "MINUTIAE" || header[1] != "v1" {
            return Err(Error::Format("bad template header".into()));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad header field {s:?}")))
        };
        let count = parse_usize(header[2])?;
        let dims = (parse_usize(header[3])?, parse_usize(header[4])?);
        let mut minutiae = Vec::with_capacity(count);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("bad minutia line {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
            let kind = match f[3] {
                "termination" => MinutiaKind::Termination,
                "bifurcation" => MinutiaKind::Bifurcation,
                other => return Err(Error::Format(format!("unknown minutia kind {other:?}"))),
            };
            minutiae.push(Minutia {
                x: num(f[0])?,
                y: num(f[1])?,
                theta: wrap_2pi(num(f[2])?.to_radians()),
                kind,
                quality: num(f[4])?,
            });
        }
        if minutiae.len() != count {
            return Err(Error::Format(format!(
                "header says {count} minutiae, found {}",
                minutiae.len()
            )));
        }
        Ok(Self::new(minutiae, dims))
    }

    pub fn centroid(&self) -> (f64, f64) {
        if self.minutiae.is_empty() {
            return (0.0, 0.0);
        }
        let n = self.minutiae.len() as f64;
        let sx: f64 = self.minutiae.iter().map(|m| m.x).sum();
        let sy: f64 = self.minutiae.iter().map(|m| m.y).sum();
        (sx / n, sy / n)
    }
}

/// Rotates every minutia about the template centroid, then translates;
/// directions turn by the same rotation.
pub fn rigid_transform(t: &MinutiaTemplate, rotation: f64, dx: f64, dy: f64) -> MinutiaTemplate {
    if rotation == 0.0 && dx == 0.0 && dy == 0.0 {
        return t.clone();
    }
    let (cx, cy) = t.centroid();
    let (s, c) = rotation.sin_cos();
    let minutiae = t
        .minutiae
        .iter()
        .map(|m| {
            let (px, py) = (m.x - cx, m.y - cy);
            Minutia {
                x: cx + c * px - s * py + dx,
                y: cy + s * px + c * py + dy,
                theta: wrap_2pi(m.theta + rotation),
                ..*m
            }
        })
        .collect();
    MinutiaTemplate::new(minutiae, t.source_dims)
}

/// Random template with `n` minutiae spread over a `size x size` area and
/// pairwise distances of at least `min_gap`.
pub fn random_template(seed: u64, n: usize, size: f64, min_gap: f64) -> MinutiaTemplate {
    use rand::Rng;
    let mut rng = crate::seed::rng(seed);
    let mut minutiae: Vec<Minutia> = Vec::with_capacity(n);
    while minutiae.len() < n {
        let (x, y) = (rng.random_range(0.0..size), rng.random_range(0.0..size));
        if minutiae.iter().any(|m| (m.x - x).hypot(m.y - y) < min_gap) {
            continue;
        }
        minutiae.push(Minutia {
            x,
            y,
            theta: rng.random_range(0.0..2.0 * PI),
            kind: if rng.random_bool(0.5) {
                MinutiaKind::Termination
            } else {
                MinutiaKind::Bifurcation
            },
            quality: rng.random_range(0.0..1.0),
        });
    }
    MinutiaTemplate::new(minutiae, (size.ceil() as usize, size.ceil() as usize))
}
