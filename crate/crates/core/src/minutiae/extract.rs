use std::f64::consts::PI;

use super::{Minutia, MinutiaKind, MinutiaTemplate};
use crate::imgcore::filter::{box_mean, gaussian_blur};
use crate::imgcore::{
    angle_diff, estimate_orientation_field, wrap_2pi, FingerprintImage, ForegroundMask, OrientationField,
};

/// Tunables of the extraction pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Pre-smoothing before binarization.
    pub smoothing_sigma: f32,
    /// Radius of the local-mean binarization window.
    pub threshold_radius: usize,
    /// Terminations whose ridge reaches a junction or another ending within
    /// this many skeleton steps are removed together with it.
    pub spur_length: usize,
    /// Minutiae closer than this are removed pairwise.
    pub min_distance: f64,
    /// Skeleton steps traced to estimate directions.
    pub trace_length: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            smoothing_sigma: 1.0,
            threshold_radius: 7,
            spur_length: 8,
            min_distance: 8.0,
            trace_length: 10,
        }
    }
}

pub fn extract_minutiae(img: &FingerprintImage, mask: &ForegroundMask) -> MinutiaTemplate {
    extract_minutiae_with(img, mask, &ExtractConfig::default())
}

/// Binarize, thin, classify by crossing number, then filter spurs, close
/// pairs and minutiae near the foreground boundary.
pub fn extract_minutiae_with(img: &FingerprintImage, mask: &ForegroundMask, cfg: &ExtractConfig) -> MinutiaTemplate {
    let dims = (img.width(), img.height());
    if img.check_size().is_err() || !mask.mask.iter().any(|&m| m) {
        return MinutiaTemplate::empty(dims);
    }
    let field = match estimate_orientation_field(img, mask.block_size.clamp(8, 32)) {
        Ok(f) => f,
        Err(_) => return MinutiaTemplate::empty(dims),
    };
    let mut skel = binarize(img, mask, cfg);
    thin(&mut skel);
    let candidates = classify(&skel);
    let kept = filter_candidates(&skel, mask, &candidates, cfg);
    let minutiae = kept
        .into_iter()
        .map(|(x, y, kind)| {
            let traced = trace_direction(&skel, x, y, kind, cfg.trace_length);
            let theta = refine_direction(&field, x, y, traced);
            Minutia {
                x: x as f64,
                y: y as f64,
                theta,
                kind,
                quality: field.coherence_at_pixel(x, y),
            }
        })
        .collect();
    MinutiaTemplate::new(minutiae, dims)
}

/// Binary map with a zero frame: 1 = ridge. Ridges are dark.
pub(crate) struct Skeleton {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Skeleton {
    #[inline]
    fn at(&self, x: usize, y: usize) -> u8 {
        self.px[y * self.w + x]
    }

    /// Clockwise 8-neighbourhood starting north. Caller guarantees an
    /// interior pixel.
    #[inline]
    fn ring(&self, x: usize, y: usize) -> [u8; 8] {
        [
            self.at(x, y - 1),
            self.at(x + 1, y - 1),
            self.at(x + 1, y),
            self.at(x + 1, y + 1),
            self.at(x, y + 1),
            self.at(x - 1, y + 1),
            self.at(x - 1, y),
            self.at(x - 1, y - 1),
        ]
    }

    fn interior(&self, x: usize, y: usize) -> bool {
        x >= 1 && y >= 1 && x + 1 < self.w && y + 1 < self.h
    }

    fn crossing_number(&self, x: usize, y: usize) -> u8 {
        let n = self.ring(x, y);
        let mut t = 0;
        for i in 0..8 {
            t += (n[i] != n[(i + 1) % 8]) as u8;
        }
        t / 2
    }
}

const RING_OFFSETS: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn binarize(img: &FingerprintImage, mask: &ForegroundMask, cfg: &ExtractConfig) -> Skeleton {
    let (w, h) = (img.width(), img.height());
    let smooth = gaussian_blur(&img.to_plane(), cfg.smoothing_sigma);
    let local = box_mean(&smooth, cfg.threshold_radius);
    let mut px = vec![0u8; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            // The small margin keeps flat regions from flickering on rounding.
            px[i] = (mask.contains_pixel(x, y) && smooth.data[i] + 0.5 < local.data[i]) as u8;
        }
    }
    Skeleton { w, h, px }
}

/// Zhang-Suen thinning to a one-pixel skeleton.
fn thin(s: &mut Skeleton) {
    let mut remove = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            remove.clear();
            for y in 1..s.h - 1 {
                for x in 1..s.w - 1 {
                    if s.at(x, y) == 0 {
                        continue;
                    }
                    let n = s.ring(x, y);
                    let b: u8 = n.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| n[i] == 0 && n[(i + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    // n[0]=N, n[2]=E, n[4]=S, n[6]=W
                    let ok = if pass == 0 {
                        n[0] * n[2] * n[4] == 0 && n[2] * n[4] * n[6] == 0
                    } else {
                        n[0] * n[2] * n[6] == 0 && n[0] * n[4] * n[6] == 0
                    };
                    if ok {
                        remove.push(y * s.w + x);
                    }
                }
            }
            for &i in &remove {
                s.px[i] = 0;
            }
            changed |= !remove.is_empty();
        }
        if !changed {
            break;
        }
    }
}

fn classify(s: &Skeleton) -> Vec<(usize, usize, MinutiaKind)> {
    let mut out = Vec::new();
    for y in 1..s.h - 1 {
        for x in 1..s.w - 1 {
            if s.at(x, y) == 0 {
                continue;
            }
            match s.crossing_number(x, y) {
                1 => out.push((x, y, MinutiaKind::Termination)),
                3 => out.push((x, y, MinutiaKind::Bifurcation)),
                _ => {}
            }
        }
    }
    out
}

enum TraceEnd {
    /// Reached a pixel with crossing number >= 3.
    Junction(usize, usize),
    /// Reached a ridge ending.
    Ending(usize, usize),
    /// Walked the full length (or left the interior).
    Open(usize, usize),
}

/// Walks along the skeleton from `start` for at most `steps` pixels, never
/// revisiting pixels in `visited`.
fn walk(s: &Skeleton, start: (usize, usize), visited: &mut Vec<(usize, usize)>, steps: usize) -> TraceEnd {
    let (mut x, mut y) = start;
    for _ in 0..steps {
        visited.push((x, y));
        let mut next = None;
        // 4-neighbours first so diagonal shortcuts do not skip pixels.
        for &i in &[0usize, 2, 4, 6, 1, 3, 5, 7] {
            let (dx, dy) = RING_OFFSETS[i];
            let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
            if s.at(nx, ny) == 1 && !visited.contains(&(nx, ny)) {
                next = Some((nx, ny));
                break;
            }
        }
        let Some((nx, ny)) = next else {
            return TraceEnd::Ending(x, y);
        };
        if !s.interior(nx, ny) {
            return TraceEnd::Open(nx, ny);
        }
        match s.crossing_number(nx, ny) {
            1 => return TraceEnd::Ending(nx, ny),
            cn if cn >= 3 => return TraceEnd::Junction(nx, ny),
            _ => {}
        }
        x = nx;
        y = ny;
    }
    TraceEnd::Open(x, y)
}

/// First pixel of each branch leaving `(x, y)`, one per run of set
/// neighbours in the ring.
fn branch_starts(s: &Skeleton, x: usize, y: usize) -> Vec<(usize, usize)> {
    let n = s.ring(x, y);
    let mut starts = Vec::new();
    for i in 0..8 {
        if n[i] == 1 && n[(i + 7) % 8] == 0 {
            // Prefer the 4-connected member of the run.
            let mut pick = i;
            if i % 2 == 1 && n[(i + 1) % 8] == 1 {
                pick = (i + 1) % 8;
            }
            let (dx, dy) = RING_OFFSETS[pick];
            starts.push(((x as isize + dx) as usize, (y as isize + dy) as usize));
        }
    }
    starts
}

fn ring_pixels(x: usize, y: usize) -> Vec<(usize, usize)> {
    RING_OFFSETS
        .iter()
        .map(|&(dx, dy)| ((x as isize + dx) as usize, (y as isize + dy) as usize))
        .collect()
}

fn filter_candidates(
    s: &Skeleton,
    mask: &ForegroundMask,
    candidates: &[(usize, usize, MinutiaKind)],
    cfg: &ExtractConfig,
) -> Vec<(usize, usize, MinutiaKind)> {
    let bs = mask.block_size;
    // Drop anything within one block of background or the image edge.
    let inside = |x: usize, y: usize| {
        let (bx, by) = ((x / bs) as isize, (y / bs) as isize);
        (-1..=1).all(|dy| (-1..=1).all(|dx| mask.get_signed(bx + dx, by + dy)))
    };
    let mut alive: Vec<bool> = candidates.iter().map(|&(x, y, _)| inside(x, y)).collect();
    let index_of = |x: usize, y: usize| candidates.iter().position(|&(cx, cy, _)| cx == x && cy == y);

    // Spurs and short isolated segments.
    let mut drop = vec![false; candidates.len()];
    for (i, &(x, y, kind)) in candidates.iter().enumerate() {
        if kind != MinutiaKind::Termination {
            continue;
        }
        let mut visited = Vec::with_capacity(cfg.spur_length + 1);
        match walk(s, (x, y), &mut visited, cfg.spur_length) {
            TraceEnd::Junction(jx, jy) | TraceEnd::Ending(jx, jy) => {
                drop[i] = true;
                if let Some(j) = index_of(jx, jy) {
                    drop[j] = true;
                }
            }
            TraceEnd::Open(..) => {}
        }
    }
    for (a, d) in alive.iter_mut().zip(&drop) {
        *a &= !d;
    }

    // Close pairs, judged on the survivors simultaneously.
    let survivors: Vec<usize> = (0..candidates.len()).filter(|&i| alive[i]).collect();
    let mut close = vec![false; candidates.len()];
    for (k, &i) in survivors.iter().enumerate() {
        for &j in &survivors[k + 1..] {
            let (xi, yi, _) = candidates[i];
            let (xj, yj, _) = candidates[j];
            let d = ((xi as f64 - xj as f64).powi(2) + (yi as f64 - yj as f64).powi(2)).sqrt();
            if d < cfg.min_distance {
                close[i] = true;
                close[j] = true;
            }
        }
    }
    survivors
        .into_iter()
        .filter(|&i| !close[i])
        .map(|i| candidates[i])
        .collect()
}

/// Direction estimated from the skeleton alone, if tracing succeeds.
fn trace_direction(s: &Skeleton, x: usize, y: usize, kind: MinutiaKind, length: usize) -> Option<f64> {
    let endpoint = |end: TraceEnd| match end {
        TraceEnd::Junction(a, b) | TraceEnd::Ending(a, b) | TraceEnd::Open(a, b) => (a, b),
    };
    let angle_to = |(px, py): (usize, usize)| (py as f64 - y as f64).atan2(px as f64 - x as f64);
    match kind {
        MinutiaKind::Termination => {
            let mut visited = Vec::new();
            let (px, py) = endpoint(walk(s, (x, y), &mut visited, length));
            if (px, py) == (x, y) {
                return None;
            }
            // Points out of the ridge end.
            Some(wrap_2pi(angle_to((px, py)) + PI))
        }
        MinutiaKind::Bifurcation => {
            let starts = branch_starts(s, x, y);
            if starts.len() != 3 {
                return None;
            }
            let mut blocked = ring_pixels(x, y);
            blocked.push((x, y));
            let angles: Vec<f64> = starts
                .iter()
                .map(|&st| {
                    let mut visited: Vec<(usize, usize)> = blocked.iter().copied().filter(|&p| p != st).collect();
                    angle_to(endpoint(walk(s, st, &mut visited, length)))
                })
                .collect();
            // The two closest branches are the arms; the direction points
            // away from the remaining stem, into the fork.
            let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
            let &(_, _, stem) = pairs
                .iter()
                .min_by(|a, b| angle_diff(angles[a.0], angles[a.1]).total_cmp(&angle_diff(angles[b.0], angles[b.1])))
                .unwrap();
            Some(wrap_2pi(angles[stem] + PI))
        }
    }
}

/// Snaps the traced direction onto the local ridge orientation, choosing the
/// sense closest to the trace.
fn refine_direction(field: &OrientationField, x: usize, y: usize, traced: Option<f64>) -> f64 {
    let orientation = field.angle_at_pixel(x, y);
    match traced {
        Some(t) => {
            if angle_diff(orientation, t) <= angle_diff(orientation + PI, t) {
                wrap_2pi(orientation)
            } else {
                wrap_2pi(orientation + PI)
            }
        }
        None => wrap_2pi(orientation),
    }
}
