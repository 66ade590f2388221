//! Evaluation protocol: pairing rules for normal operation and the two
//! direct-attack scenarios, score sets, FAR-anchored thresholds, success
//! rates and DET curves.

pub mod export;
pub mod metrics;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minutiae::{match_minutiae_with, MatchConfig, PreparedTemplate};
use crate::ridgefeat::{match_ridge, RidgeFeatureVector};
use crate::synthdb::{Cooperation, CorpusManifest, Realness, SampleKey, SensorKind};

pub use metrics::{compute_det, equal_error_rate, success_rate, threshold_at_far, DetPoint, OperatingPoint};
pub use report::{evaluate, evaluate_scores, CiMethod, EvaluationReport, ProfileScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Genuine,
    Impostor,
    Attack1,
    Attack2,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Genuine => "genuine",
            ScoreKind::Impostor => "impostor",
            ScoreKind::Attack1 => "attack1",
            ScoreKind::Attack2 => "attack2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    Minutiae,
    Ridge,
}

impl Matcher {
    pub const ALL: [Matcher; 2] = [Matcher::Minutiae, Matcher::Ridge];

    pub fn as_str(self) -> &'static str {
        match self {
            Matcher::Minutiae => "minutiae",
            Matcher::Ridge => "ridge",
        }
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Matcher {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "minutiae" => Ok(Matcher::Minutiae),
            "ridge" => Ok(Matcher::Ridge),
            other => Err(Error::param(format!("unknown matcher '{other}'"))),
        }
    }
}

/// A comparison. Unordered pairs are stored with `a < b`; attack-2 pairs
/// hold the enrolled real sample in `a` and the fake in `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub a: SampleKey,
    pub b: SampleKey,
}

impl Pair {
    fn unordered(x: SampleKey, y: SampleKey) -> Self {
        if x <= y {
            Pair { a: x, b: y }
        } else {
            Pair { a: y, b: x }
        }
    }

    pub fn id(&self) -> String {
        format!("{}|{}", self.a, self.b)
    }
}

/// Samples of one profile/realness/coop slice grouped by finger.
fn by_finger(
    m: &CorpusManifest,
    profile: SensorKind,
    realness: Realness,
    coop: Option<Cooperation>,
) -> BTreeMap<(u32, u32), Vec<SampleKey>> {
    let mut groups: BTreeMap<(u32, u32), Vec<SampleKey>> = BTreeMap::new();
    for r in &m.records {
        let k = r.key;
        if k.profile == profile && k.realness == realness && k.coop == coop {
            groups.entry(k.finger_id()).or_default().push(k);
        }
    }
    groups
}

fn within_fingers(groups: &BTreeMap<(u32, u32), Vec<SampleKey>>) -> Vec<Pair> {
    let mut out = Vec::new();
    for samples in groups.values() {
        for (i, &x) in samples.iter().enumerate() {
            for &y in &samples[i + 1..] {
                out.push(Pair::unordered(x, y));
            }
        }
    }
    out
}

/// Same-finger real/real pairs: `F * s(s-1)/2`.
pub fn genuine_pairs(m: &CorpusManifest, profile: SensorKind) -> Vec<Pair> {
    within_fingers(&by_finger(m, profile, Realness::Real, None))
}

/// Cross-finger real/real pairs: `C(F,2) * s^2`. Different fingers of one
/// subject count as impostors.
pub fn impostor_pairs(m: &CorpusManifest, profile: SensorKind) -> Vec<Pair> {
    let groups: Vec<Vec<SampleKey>> = by_finger(m, profile, Realness::Real, None).into_values().collect();
    let mut out = Vec::new();
    for (i, f) in groups.iter().enumerate() {
        for g in &groups[i + 1..] {
            for &x in f {
                for &y in g {
                    out.push(Pair::unordered(x, y));
                }
            }
        }
    }
    out
}

/// Same-finger fake/fake pairs of one cooperation mode: `F * s(s-1)/2`.
pub fn attack1_pairs(m: &CorpusManifest, profile: SensorKind, coop: Cooperation) -> Vec<Pair> {
    within_fingers(&by_finger(m, profile, Realness::Fake, Some(coop)))
}

/// Same-finger real (enrolled) x fake (presented) pairs: `F * s_real * s_fake`.
pub fn attack2_pairs(m: &CorpusManifest, profile: SensorKind, coop: Cooperation) -> Vec<Pair> {
    let reals = by_finger(m, profile, Realness::Real, None);
    let fakes = by_finger(m, profile, Realness::Fake, Some(coop));
    let mut out = Vec::new();
    for (finger, real) in &reals {
        if let Some(fake) = fakes.get(finger) {
            for &x in real {
                for &y in fake {
                    out.push(Pair { a: x, b: y });
                }
            }
        }
    }
    out
}

/// Scores of one kind, in pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub kind: ScoreKind,
    pub pairs: Vec<Pair>,
    pub scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(kind: ScoreKind, pairs: Vec<Pair>, scores: Vec<f64>) -> Result<Self> {
        if pairs.len() != scores.len() {
            return Err(Error::Shape(format!(
                "{} pairs but {} scores",
                pairs.len(),
                scores.len()
            )));
        }
        Ok(Self { kind, pairs, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores grouped by the finger of the first sample, in finger order.
    pub fn by_finger(&self) -> Vec<Vec<f64>> {
        let mut groups: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
        for (p, &s) in self.pairs.iter().zip(&self.scores) {
            groups.entry(p.a.finger_id()).or_default().push(s);
        }
        groups.into_values().collect()
    }
}

/// Extracted templates keyed by sample.
#[derive(Debug, Default)]
pub struct TemplateStore {
    minutiae: HashMap<SampleKey, PreparedTemplate>,
    ridge: HashMap<SampleKey, RidgeFeatureVector>,
    pub match_config: MatchConfig,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_minutiae(&mut self, key: SampleKey, t: crate::minutiae::MinutiaTemplate) {
        self.minutiae.insert(key, PreparedTemplate::new(t, self.match_config.k));
    }

    pub fn insert_ridge(&mut self, key: SampleKey, v: RidgeFeatureVector) {
        self.ridge.insert(key, v);
    }

    pub fn minutiae(&self, key: &SampleKey) -> Result<&PreparedTemplate> {
        self.minutiae
            .get(key)
            .ok_or_else(|| Error::MissingTemplate(format!("{key} (minutiae)")))
    }

    pub fn ridge(&self, key: &SampleKey) -> Result<&RidgeFeatureVector> {
        self.ridge
            .get(key)
            .ok_or_else(|| Error::MissingTemplate(format!("{key} (ridge)")))
    }

    pub fn score(&self, matcher: Matcher, a: &SampleKey, b: &SampleKey) -> Result<f64> {
        match matcher {
            Matcher::Minutiae => Ok(match_minutiae_with(
                self.minutiae(a)?,
                self.minutiae(b)?,
                &self.match_config,
            )),
            Matcher::Ridge => match_ridge(self.ridge(a)?, self.ridge(b)?),
        }
    }
}

/// Scores every pair; output order follows `pairs` regardless of scheduling.
pub fn score_pairs(kind: ScoreKind, pairs: Vec<Pair>, matcher: Matcher, store: &TemplateStore) -> Result<ScoreSet> {
    let scores = pairs
        .par_iter()
        .map(|p| store.score(matcher, &p.a, &p.b))
        .collect::<Result<Vec<f64>>>()?;
    ScoreSet::new(kind, pairs, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::random_template;
    use crate::synthdb::SampleRecord;
    use std::collections::BTreeSet;

    const COOPS: [Cooperation; 2] = [Cooperation::Cooperative, Cooperation::NonCooperative];

    /// Manifest with `fingers` fingers (two per subject), `reals` real and
    /// `fakes` fake samples per finger and coop mode, two profiles.
    pub(crate) fn manifest(fingers: u32, reals: u32, fakes: u32) -> CorpusManifest {
        let mut records = Vec::new();
        for f in 0..fingers {
            for profile in [SensorKind::Optical, SensorKind::Thermal] {
                let mut push = |sample, realness, coop| {
                    let key = SampleKey {
                        subject: f / 2 + 1,
                        finger: f % 2 + 1,
                        sample,
                        profile,
                        realness,
                        coop,
                    };
                    records.push(SampleRecord {
                        key,
                        path: key.file_name(),
                        quality_level: None,
                    });
                };
                for s in 1..=reals {
                    push(s, Realness::Real, None);
                }
                for coop in COOPS {
                    for s in 1..=fakes {
                        push(s, Realness::Fake, Some(coop));
                    }
                }
            }
        }
        CorpusManifest::new(records).unwrap()
    }

    /// Brute force: test every ordered record pair against the rule.
    fn brute(m: &CorpusManifest, keep: impl Fn(&SampleKey, &SampleKey) -> bool, ordered: bool) -> BTreeSet<Pair> {
        let mut out = BTreeSet::new();
        for x in &m.records {
            for y in &m.records {
                if x.key != y.key && keep(&x.key, &y.key) {
                    out.insert(if ordered {
                        Pair { a: x.key, b: y.key }
                    } else {
                        Pair::unordered(x.key, y.key)
                    });
                }
            }
        }
        out
    }

    fn as_set(pairs: &[Pair]) -> BTreeSet<Pair> {
        let set: BTreeSet<Pair> = pairs.iter().copied().collect();
        assert_eq!(set.len(), pairs.len(), "duplicate pair");
        set
    }

    pub(crate) fn check_against_brute_force(m: &CorpusManifest) {
        let real = |k: &SampleKey, p| k.profile == p && k.realness == Realness::Real;
        let fake = |k: &SampleKey, p, c| k.profile == p && k.coop == Some(c);
        for p in [SensorKind::Optical, SensorKind::Thermal] {
            let g = brute(
                m,
                |x, y| real(x, p) && real(y, p) && x.finger_id() == y.finger_id(),
                false,
            );
            assert_eq!(as_set(&genuine_pairs(m, p)), g);
            let i = brute(
                m,
                |x, y| real(x, p) && real(y, p) && x.finger_id() != y.finger_id(),
                false,
            );
            assert_eq!(as_set(&impostor_pairs(m, p)), i);
            for c in COOPS {
                let a1 = brute(
                    m,
                    |x, y| fake(x, p, c) && fake(y, p, c) && x.finger_id() == y.finger_id(),
                    false,
                );
                assert_eq!(as_set(&attack1_pairs(m, p, c)), a1);
                let a2 = brute(
                    m,
                    |x, y| real(x, p) && fake(y, p, c) && x.finger_id() == y.finger_id(),
                    true,
                );
                assert_eq!(as_set(&attack2_pairs(m, p, c)), a2);
            }
        }
    }

    #[test]
    fn default_corpus_shape_counts() {
        let m = manifest(68, 4, 4);
        let p = SensorKind::Optical;
        assert_eq!(genuine_pairs(&m, p).len(), 408);
        assert_eq!(impostor_pairs(&m, p).len(), 36_448);
        for c in COOPS {
            assert_eq!(attack1_pairs(&m, p, c).len(), 408);
            assert_eq!(attack2_pairs(&m, p, c).len(), 1_088);
        }
    }

    #[test]
    fn small_shape_counts() {
        let p = SensorKind::Optical;
        let c = Cooperation::Cooperative;
        assert_eq!(genuine_pairs(&manifest(1, 1, 1), p).len(), 0);
        assert_eq!(genuine_pairs(&manifest(3, 3, 1), p).len(), 9);
        assert_eq!(impostor_pairs(&manifest(1, 4, 1), p).len(), 0);
        assert_eq!(impostor_pairs(&manifest(3, 2, 1), p).len(), 12);
        assert_eq!(attack1_pairs(&manifest(5, 2, 1), p, c).len(), 0);
        assert_eq!(attack1_pairs(&manifest(2, 2, 3), p, c).len(), 6);
        assert_eq!(attack2_pairs(&manifest(3, 2, 0), p, c).len(), 0);
        assert_eq!(attack2_pairs(&manifest(2, 2, 2), p, c).len(), 8);
    }

    #[test]
    fn small_shapes_match_brute_force() {
        for (f, r, k) in [(1, 1, 1), (3, 3, 2), (4, 2, 0), (6, 5, 5)] {
            check_against_brute_force(&manifest(f, r, k));
        }
    }

    fn store_for(m: &CorpusManifest) -> TemplateStore {
        let mut store = TemplateStore::new();
        for (i, r) in m.records.iter().enumerate() {
            store.insert_minutiae(r.key, random_template(i as u64, 20, 250.0, 8.0));
        }
        store
    }

    #[test]
    fn scoring_is_deterministic_and_reports_missing() {
        let m = manifest(3, 2, 1);
        let store = store_for(&m);
        let pairs = impostor_pairs(&m, SensorKind::Optical);
        let a = score_pairs(ScoreKind::Impostor, pairs.clone(), Matcher::Minutiae, &store).unwrap();
        let b = score_pairs(ScoreKind::Impostor, pairs, Matcher::Minutiae, &store).unwrap();
        assert_eq!(a, b);
        let empty = score_pairs(ScoreKind::Genuine, Vec::new(), Matcher::Minutiae, &store).unwrap();
        assert!(empty.is_empty());
        let self_pair = Pair {
            a: m.records[0].key,
            b: m.records[0].key,
        };
        let s = score_pairs(ScoreKind::Genuine, vec![self_pair], Matcher::Minutiae, &store).unwrap();
        assert_eq!(s.scores, vec![1.0]);
        let err = score_pairs(ScoreKind::Genuine, vec![self_pair], Matcher::Ridge, &store).unwrap_err();
        assert!(matches!(&err, Error::MissingTemplate(k) if k.contains(&m.records[0].key.to_string())));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
        #[test]
        fn pair_sets_equal_brute_force(f in 1u32..=6, r in 1u32..=5, k in 0u32..=5) {
            check_against_brute_force(&manifest(f, r, k));
        }
    }
}
