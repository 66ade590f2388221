use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_det, equal_error_rate, threshold_at_far, DetPoint, OperatingPoint};
use super::{
    attack1_pairs, attack2_pairs, genuine_pairs, impostor_pairs, score_pairs, Matcher, ScoreKind, ScoreSet,
    TemplateStore,
};
use crate::error::{Error, Result};
use crate::stats::{self, ConfidenceInterval, SubjectCounts, DEFAULT_CONFIDENCE};
use crate::synthdb::{Cooperation, CorpusManifest, SensorKind};

pub const DEFAULT_FAR_TARGETS: [f64; 3] = [0.1, 1.0, 10.0];
const COOP_MODES: [Cooperation; 2] = [Cooperation::Cooperative, Cooperation::NonCooperative];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum CiMethod {
    BetaBinomial,
    Bootstrap { resamples: usize, seed: u64 },
}

impl CiMethod {
    fn interval(&self, counts: &SubjectCounts) -> Result<ConfidenceInterval> {
        match *self {
            CiMethod::BetaBinomial => stats::beta_binomial_ci(counts, DEFAULT_CONFIDENCE),
            CiMethod::Bootstrap { resamples, seed } => stats::bootstrap_ci(counts, DEFAULT_CONFIDENCE, resamples, seed),
        }
    }
}

/// Every score set needed for one (matcher, profile) report. Attack sets are
/// indexed `[coop, noncoop]`.
#[derive(Debug, Clone)]
pub struct ProfileScores {
    pub matcher: Matcher,
    pub profile: SensorKind,
    pub genuine: ScoreSet,
    pub impostor: ScoreSet,
    pub attack1: [ScoreSet; 2],
    pub attack2: [ScoreSet; 2],
}

impl ProfileScores {
    pub fn compute(m: &CorpusManifest, matcher: Matcher, profile: SensorKind, store: &TemplateStore) -> Result<Self> {
        let score = |kind, pairs| score_pairs(kind, pairs, matcher, store);
        let [c, n] = COOP_MODES;
        Ok(Self {
            matcher,
            profile,
            genuine: score(ScoreKind::Genuine, genuine_pairs(m, profile))?,
            impostor: score(ScoreKind::Impostor, impostor_pairs(m, profile))?,
            attack1: [
                score(ScoreKind::Attack1, attack1_pairs(m, profile, c))?,
                score(ScoreKind::Attack1, attack1_pairs(m, profile, n))?,
            ],
            attack2: [
                score(ScoreKind::Attack2, attack2_pairs(m, profile, c))?,
                score(ScoreKind::Attack2, attack2_pairs(m, profile, n))?,
            ],
        })
    }

    /// DET scenarios by file stem. Attack-1 matings replace the genuine set;
    /// attack-2 matings replace the impostor set.
    pub fn det_curves(&self) -> Result<Vec<(String, Vec<DetPoint>)>> {
        let mut out = vec![(
            "nom".to_string(),
            compute_det(&self.genuine.scores, &self.impostor.scores)?,
        )];
        for (i, mode) in COOP_MODES.iter().enumerate() {
            let label = mode.label();
            out.push((
                format!("{label}_attack1"),
                compute_det(&self.attack1[i].scores, &self.impostor.scores)?,
            ));
            out.push((
                format!("{label}_attack2"),
                compute_det(&self.genuine.scores, &self.attack2[i].scores)?,
            ));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub genuine: usize,
    pub impostor: usize,
    pub attack1_coop: usize,
    pub attack1_noncoop: usize,
    pub attack2_coop: usize,
    pub attack2_noncoop: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackCells {
    pub coop: ConfidenceInterval,
    pub noncoop: ConfidenceInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingRow {
    pub nom: OperatingPoint,
    /// Success rates in percent with their intervals.
    pub attack1: AttackCells,
    pub attack2: AttackCells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub matcher: Matcher,
    pub profile: SensorKind,
    pub ci_method: CiMethod,
    pub counts: PairCounts,
    pub eer: f64,
    pub operating_points: Vec<OperatingRow>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.matcher, self.profile)
    }
}

/// Attack success at `threshold` with per-finger grouping for the interval.
fn attack_cell(set: &ScoreSet, threshold: f64, method: &CiMethod) -> Result<ConfidenceInterval> {
    if set.is_empty() {
        return Err(Error::Protocol(format!("no {} scores", set.kind.as_str())));
    }
    let counts = SubjectCounts::new(set.by_finger().iter().map(|scores| {
        let hits = scores.iter().filter(|&&s| s >= threshold).count();
        (scores.len() as u64, hits as u64)
    }))?;
    method.interval(&counts)
}

pub fn evaluate_scores(scores: &ProfileScores, far_targets: &[f64], method: CiMethod) -> Result<EvaluationReport> {
    if far_targets.is_empty() {
        return Err(Error::param("at least one FAR target is required"));
    }
    if scores.impostor.is_empty() {
        return Err(Error::Protocol(
            "no impostor pairs (corpus needs at least two fingers)".into(),
        ));
    }
    if scores.genuine.is_empty() {
        return Err(Error::Protocol(
            "no genuine pairs (corpus needs at least two samples per finger)".into(),
        ));
    }
    let eer = equal_error_rate(&compute_det(&scores.genuine.scores, &scores.impostor.scores)?)?;
    let mut rows = Vec::with_capacity(far_targets.len());
    for &target in far_targets {
        let nom = threshold_at_far(&scores.impostor.scores, target)?.with_frr(&scores.genuine.scores)?;
        let t = nom.threshold;
        rows.push(OperatingRow {
            nom,
            attack1: AttackCells {
                coop: attack_cell(&scores.attack1[0], t, &method)?,
                noncoop: attack_cell(&scores.attack1[1], t, &method)?,
            },
            attack2: AttackCells {
                coop: attack_cell(&scores.attack2[0], t, &method)?,
                noncoop: attack_cell(&scores.attack2[1], t, &method)?,
            },
        });
    }
    Ok(EvaluationReport {
        matcher: scores.matcher,
        profile: scores.profile,
        ci_method: method,
        counts: PairCounts {
            genuine: scores.genuine.len(),
            impostor: scores.impostor.len(),
            attack1_coop: scores.attack1[0].len(),
            attack1_noncoop: scores.attack1[1].len(),
            attack2_coop: scores.attack2[0].len(),
            attack2_noncoop: scores.attack2[1].len(),
        },
        eer,
        operating_points: rows,
    })
}

pub fn evaluate(
    m: &CorpusManifest,
    matcher: Matcher,
    profile: SensorKind,
    far_targets: &[f64],
    store: &TemplateStore,
) -> Result<EvaluationReport> {
    let scores = ProfileScores::compute(m, matcher, profile, store)?;
    evaluate_scores(&scores, far_targets, CiMethod::BetaBinomial)
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

/// One table per matcher; rows are profile x operating point.
pub fn markdown_table(reports: &[EvaluationReport]) -> String {
    let mut out = String::new();
    for matcher in Matcher::ALL {
        let mine: Vec<&EvaluationReport> = reports.iter().filter(|r| r.matcher == matcher).collect();
        if mine.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "### {matcher} matcher\n");
        out.push_str(
            "| Profile | NOM FAR (%) | NOM FRR (%) | Attack 1 coop SR (%) | Attack 1 noncoop SR (%) | Attack 2 coop SR (%) | Attack 2 noncoop SR (%) |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in mine {
            for row in &r.operating_points {
                let frr = row.nom.frr_at_threshold.map(pct).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    r.profile,
                    pct(row.nom.achieved_far),
                    frr,
                    row.attack1.coop,
                    row.attack1.noncoop,
                    row.attack2.coop,
                    row.attack2.noncoop
                );
            }
        }
    }
    out
}
