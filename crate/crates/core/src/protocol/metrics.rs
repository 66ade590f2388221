//! Accept rule: a comparison is accepted when `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold fixed on the impostor distribution. Rates in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_far: f64,
    pub threshold: f64,
    pub achieved_far: f64,
    /// Filled once genuine scores are known.
    pub frr_at_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

fn sorted(scores: &[f64]) -> Result<Vec<f64>> {
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Protocol(format!("non-finite score {s}")));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Number of entries of ascending `v` that are `>= t`.
fn count_at_least(v: &[f64], t: f64) -> usize {
    v.len() - v.partition_point(|&s| s < t)
}

fn count_below(v: &[f64], t: f64) -> usize {
    v.partition_point(|&s| s < t)
}

fn within_target(accepted: usize, total: usize, target_pct: f64) -> bool {
    // Relative slack absorbs representation error in targets such as 0.1.
    accepted as f64 * 100.0 <= target_pct * total as f64 * (1.0 + 1e-12)
}

/// Smallest observed impostor score (or the sentinel just above the
/// maximum) whose accept fraction does not exceed `target_far` percent.
pub fn threshold_at_far(impostor: &[f64], target_far: f64) -> Result<OperatingPoint> {
    if impostor.is_empty() {
        return Err(Error::Protocol("no impostor scores".into()));
    }
    if !(target_far > 0.0 && target_far <= 100.0) {
        return Err(Error::param(format!("FAR target {target_far} outside (0, 100]")));
    }
    let v = sorted(impostor)?;
    let n = v.len();
    let sentinel = v[n - 1].next_up();
    // Candidates ascending: distinct observed values, then the sentinel.
    // The accepted count is non-increasing along this list.
    let mut threshold = sentinel;
    let mut i = 0;
    while i < n {
        let t = v[i];
        if within_target(n - i, n, target_far) {
            threshold = t;
            break;
        }
        while i < n && v[i] == t {
            i += 1;
        }
    }
    let accepted = count_at_least(&v, threshold);
    Ok(OperatingPoint {
        target_far,
        threshold,
        achieved_far: 100.0 * accepted as f64 / n as f64,
        frr_at_threshold: None,
    })
}

impl OperatingPoint {
    pub fn with_frr(mut self, genuine: &[f64]) -> Result<Self> {
        if genuine.is_empty() {
            return Err(Error::Protocol("no genuine scores".into()));
        }
        let rejected = genuine.iter().filter(|&&s| s < self.threshold).count();
        self.frr_at_threshold = Some(100.0 * rejected as f64 / genuine.len() as f64);
        Ok(self)
    }
}

/// Percentage of attack comparisons accepted at `threshold`.
pub fn success_rate(attack: &[f64], threshold: f64) -> Result<f64> {
    if attack.is_empty() {
        return Err(Error::Protocol("no attack scores".into()));
    }
    let accepted = attack.iter().filter(|&&s| s >= threshold).count();
    Ok(100.0 * accepted as f64 / attack.len() as f64)
}

/// Threshold sweep over the sorted union of scores plus a sentinel below
/// the minimum and one above the maximum. Runs from (100, 0) to (0, 100).
pub fn compute_det(genuine: &[f64], impostor: &[f64]) -> Result<Vec<DetPoint>> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Protocol("DET needs genuine and impostor scores".into()));
    }
    let g = sorted(genuine)?;
    let i = sorted(impostor)?;
    let mut all: Vec<f64> = g.iter().chain(&i).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = Vec::with_capacity(all.len() + 2);
    thresholds.push(all[0].next_down());
    thresholds.extend_from_slice(&all);
    thresholds.push(all[all.len() - 1].next_up());
    Ok(thresholds
        .into_iter()
        .map(|t| DetPoint {
            threshold: t,
            fmr: 100.0 * count_at_least(&i, t) as f64 / i.len() as f64,
            fnmr: 100.0 * count_below(&g, t) as f64 / g.len() as f64,
        })
        .collect())
}

/// Mean of FMR and FNMR at the sweep point where they are closest.
pub fn equal_error_rate(det: &[DetPoint]) -> Result<f64> {
    det.iter()
        .min_by(|a, b| (a.fmr - a.fnmr).abs().total_cmp(&(b.fmr - b.fnmr).abs()))
        .map(|p| 0.5 * (p.fmr + p.fnmr))
        .ok_or_else(|| Error::Protocol("empty DET curve".into()))
}
