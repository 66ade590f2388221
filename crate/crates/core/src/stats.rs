//! Beta-Binomial confidence intervals for rates measured over correlated
//! trials (several attempts per subject).
//!
//! The intra-class correlation is estimated by the one-way ANOVA method of
//! moments; the interval is a logit-normal interval whose variance carries
//! the design effect `1 + (m - 1) rho`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seed;

pub const RHO_MAX: f64 = 0.999;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 10_000;

/// Per-subject trial and success counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectCounts {
    trials: Vec<u64>,
    successes: Vec<u64>,
}

impl SubjectCounts {
    /// `(trials, successes)` per subject.
    pub fn new(counts: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let (trials, successes): (Vec<u64>, Vec<u64>) = counts.into_iter().unzip();
        if let Some(i) = trials.iter().zip(&successes).position(|(m, x)| x > m) {
            return Err(Error::param(format!("subject {i}: successes exceed trials")));
        }
        if trials.iter().filter(|&&m| m > 0).count() < 2 {
            return Err(Error::InsufficientData("need at least two subjects with trials".into()));
        }
        Ok(Self { trials, successes })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn total_trials(&self) -> u64 {
        self.trials.iter().sum()
    }

    pub fn total_successes(&self) -> u64 {
        self.successes.iter().sum()
    }

    fn active(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.trials
            .iter()
            .zip(&self.successes)
            .filter(|(&m, _)| m > 0)
            .map(|(&m, &x)| (m as f64, x as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBinomialFit {
    pub p_hat: f64,
    pub rho_hat: f64,
}

/// Rates in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

impl std::fmt::Display for ConfidenceInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.2},{:.2})", self.point, self.lo, self.hi)
    }
}

pub fn fit_beta_binomial(counts: &SubjectCounts) -> Result<BetaBinomialFit> {
    let n: f64 = counts.active().map(|(m, _)| m).sum();
    let k = counts.active().count() as f64;
    if n == 0.0 || k < 2.0 {
        return Err(Error::InsufficientData("no trials".into()));
    }
    let x: f64 = counts.active().map(|(_, x)| x).sum();
    let p_hat = x / n;
    let sum_x2_over_m: f64 = counts.active().map(|(m, x)| x * x / m).sum();
    let sum_m2: f64 = counts.active().map(|(m, _)| m * m).sum();

    let msb = (sum_x2_over_m - x * x / n) / (k - 1.0);
    let rho_hat = if n > k {
        let msw = (x - sum_x2_over_m) / (n - k);
        let m0 = (n - sum_m2 / n) / (k - 1.0);
        let denom = msb + (m0 - 1.0) * msw;
        if denom > 0.0 {
            (msb - msw) / denom
        } else {
            0.0
        }
    } else {
        // One trial per subject: within-subject variance is not identifiable.
        0.0
    };
    Ok(BetaBinomialFit {
        p_hat,
        rho_hat: if rho_hat.is_finite() {
            rho_hat.clamp(0.0, RHO_MAX)
        } else {
            0.0
        },
    })
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("confidence {confidence} outside (0, 1)")))
    }
}

pub fn beta_binomial_ci(counts: &SubjectCounts, confidence: f64) -> Result<ConfidenceInterval> {
    check_confidence(confidence)?;
    let fit = fit_beta_binomial(counts)?;
    let n = counts.active().map(|(m, _)| m).sum::<f64>();
    let k = counts.active().count() as f64;
    Ok(interval(fit.p_hat, fit.rho_hat, n, n / k, confidence))
}

/// Logit-normal interval for `p_hat` over `n` trials, `mean_trials` per
/// subject, intra-class correlation `rho`.
pub fn interval(p_hat: f64, rho: f64, n: f64, mean_trials: f64, confidence: f64) -> ConfidenceInterval {
    let deff = 1.0 + (mean_trials - 1.0).max(0.0) * rho;
    let alpha = 1.0 - confidence;
    let (lo, hi) = if p_hat <= 0.0 {
        let n_eff = n / deff;
        (0.0, 1.0 - alpha.powf(1.0 / n_eff))
    } else if p_hat >= 1.0 {
        let n_eff = n / deff;
        (alpha.powf(1.0 / n_eff), 1.0)
    } else {
        let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
        let se = (deff / (n * p_hat * (1.0 - p_hat))).sqrt();
        let centre = (p_hat / (1.0 - p_hat)).ln();
        (expit(centre - z * se), expit(centre + z * se))
    };
    ConfidenceInterval {
        point: 100.0 * p_hat,
        lo: 100.0 * lo.min(p_hat),
        hi: 100.0 * hi.max(p_hat),
        confidence,
    }
}

fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Percentile bootstrap over subjects, deterministic for a given seed.
pub fn bootstrap_ci(
    counts: &SubjectCounts,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<ConfidenceInterval> {
    check_confidence(confidence)?;
    if resamples == 0 {
        return Err(Error::param("bootstrap needs at least one resample"));
    }
    let subjects: Vec<(f64, f64)> = counts.active().collect();
    let fit = fit_beta_binomial(counts)?;
    let mut rng = seed::rng(seed);
    let mut rates: Vec<f64> = (0..resamples)
        .map(|_| {
            let (mut m, mut x) = (0.0, 0.0);
            for _ in 0..subjects.len() {
                let s = subjects[rng.random_range(0..subjects.len())];
                m += s.0;
                x += s.1;
            }
            x / m
        })
        .collect();
    rates.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    let at = |q: f64| rates[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok(ConfidenceInterval {
        point: 100.0 * fit.p_hat,
        lo: 100.0 * at(alpha / 2.0).min(fit.p_hat),
        hi: 100.0 * at(1.0 - alpha / 2.0).max(fit.p_hat),
        confidence,
    })
}

/// Draws Beta-Binomial counts with mean `p` and intra-class correlation
/// `rho` (plain Binomial when `rho` is 0). Used by the simulation oracles.
pub fn simulate_beta_binomial(p: f64, rho: f64, subjects: usize, trials: u64, seed: u64) -> SubjectCounts {
    use rand_distr::{Beta, Binomial, Distribution};
    let mut rng = seed::rng(seed);
    let beta = (rho > 0.0).then(|| Beta::new(p * (1.0 - rho) / rho, (1.0 - p) * (1.0 - rho) / rho).unwrap());
    let counts: Vec<(u64, u64)> = (0..subjects)
        .map(|_| {
            let pi = beta.as_ref().map_or(p, |b| b.sample(&mut rng));
            (trials, Binomial::new(trials, pi).unwrap().sample(&mut rng))
        })
        .collect();
    SubjectCounts::new(counts).expect("simulated counts are valid")
}
