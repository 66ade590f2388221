//! Corpus layout: subjects x fingers x samples x sensor profiles, each with
//! real, cooperative-fake and non-cooperative-fake captures.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degrade::{degrade_with_severity, severity, Cooperation, NONCOOP_INCREMENT};
use super::generator::{GeneratorParams, MasterPrint};
use crate::error::{Error, Result};
use crate::imgcore::{io, FingerprintImage};
use crate::quality::QualityLevel;
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const IMAGE_DIR: &str = "images";
pub const DEFAULT_DIMS: (usize, usize) = (256, 256);

// Seed-stream tags.
const TAG_FINGER: u64 = 0xf1;
const TAG_CAPTURE: u64 = 0xca;
const TAG_DEGRADE: u64 = 0xd9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Optical,
    Capacitive,
    Thermal,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [SensorKind::Optical, SensorKind::Capacitive, SensorKind::Thermal];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Optical => "optical",
            SensorKind::Capacitive => "capacitive",
            SensorKind::Thermal => "thermal",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "optical" => Ok(SensorKind::Optical),
            "capacitive" => Ok(SensorKind::Capacitive),
            "thermal" => Ok(SensorKind::Thermal),
            other => Err(Error::param(format!("unknown sensor profile '{other}'"))),
        }
    }
}

/// How a sensor technology images live and fake fingers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorProfile {
    pub kind: SensorKind,
    pub real_penalty: f64,
    pub fake_penalty: f64,
    /// Extra severity for non-cooperative fakes.
    pub noncoop_increment: f64,
}

impl SensorProfile {
    pub fn optical() -> Self {
        Self::with_defaults(SensorKind::Optical)
    }

    pub fn capacitive() -> Self {
        Self::with_defaults(SensorKind::Capacitive)
    }

    pub fn thermal() -> Self {
        Self::with_defaults(SensorKind::Thermal)
    }

    pub fn with_defaults(kind: SensorKind) -> Self {
        let (real_penalty, fake_penalty, noncoop_increment) = match kind {
            SensorKind::Optical => (0.05, 0.2, NONCOOP_INCREMENT),
            SensorKind::Capacitive => (0.1, 0.5, NONCOOP_INCREMENT),
            // Thermal non-cooperative fakes were not worse than cooperative ones.
            SensorKind::Thermal => (0.1, 0.7, 0.0),
        };
        Self {
            kind,
            real_penalty,
            fake_penalty,
            noncoop_increment,
        }
    }

    pub fn defaults() -> Vec<Self> {
        SensorKind::ALL.iter().map(|&k| Self::with_defaults(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.real_penalty) || !unit(self.fake_penalty) || !unit(self.noncoop_increment) {
            return Err(Error::param(format!("{}: penalties must lie in [0, 1]", self.kind)));
        }
        if self.fake_penalty < self.real_penalty {
            return Err(Error::param(format!("{}: fake penalty below real penalty", self.kind)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realness {
    Real,
    Fake,
}

impl Realness {
    pub fn as_str(self) -> &'static str {
        match self {
            Realness::Real => "real",
            Realness::Fake => "fake",
        }
    }
}

/// Identity of one capture within a corpus. Ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleKey {
    pub subject: u32,
    pub finger: u32,
    pub sample: u32,
    pub profile: SensorKind,
    pub realness: Realness,
    /// `None` for real samples.
    pub coop: Option<Cooperation>,
}

impl SampleKey {
    /// Finger identity across subjects, used as the grouping unit.
    pub fn finger_id(&self) -> (u32, u32) {
        (self.subject, self.finger)
    }

    pub fn file_name(&self) -> String {
        format!("{self}.pgm")
    }
}

fn coop_label(coop: Option<Cooperation>) -> &'static str {
    coop.map_or("na", Cooperation::label)
}

fn parse_coop(s: &str) -> Result<Option<Cooperation>> {
    match s {
        "na" | "" => Ok(None),
        "coop" => Ok(Some(Cooperation::Cooperative)),
        "noncoop" => Ok(Some(Cooperation::NonCooperative)),
        other => Err(Error::Format(format!("unknown cooperation mode '{other}'"))),
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_{}_{}_{}_{}",
            self.subject,
            self.finger,
            self.sample,
            self.profile,
            self.realness.as_str(),
            coop_label(self.coop)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub key: SampleKey,
    /// Relative to the corpus directory.
    pub path: String,
    pub quality_level: Option<QualityLevel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    subject: u32,
    finger: u32,
    sample: u32,
    profile: SensorKind,
    realness: Realness,
    coop: String,
    path: String,
    quality_level: Option<u8>,
}

/// Corpus contents, sorted by key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    pub records: Vec<SampleRecord>,
}

impl CorpusManifest {
    /// Sorts the records and rejects duplicate keys.
    pub fn new(mut records: Vec<SampleRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.key);
        if let Some(w) = records.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(Error::Format(format!("duplicate manifest record {}", w[0].key)));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, realness: Realness, coop: Option<Cooperation>) -> usize {
        self.records
            .iter()
            .filter(|r| r.key.realness == realness && r.key.coop == coop)
            .count()
    }

    /// Distinct profiles present, in canonical order.
    pub fn profiles(&self) -> Vec<SensorKind> {
        let mut p: Vec<SensorKind> = self.records.iter().map(|r| r.key.profile).collect();
        p.sort();
        p.dedup();
        p
    }

    /// Distinct (subject, finger) identities.
    pub fn fingers(&self) -> Vec<(u32, u32)> {
        let mut f: Vec<(u32, u32)> = self.records.iter().map(|r| r.key.finger_id()).collect();
        f.sort();
        f.dedup();
        f
    }

    pub fn get(&self, key: &SampleKey) -> Option<&SampleRecord> {
        self.records
            .binary_search_by_key(key, |r| r.key)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                subject: r.key.subject,
                finger: r.key.finger,
                sample: r.key.sample,
                profile: r.key.profile,
                realness: r.key.realness,
                coop: coop_label(r.key.coop).to_string(),
                path: r.path.clone(),
                quality_level: r.quality_level.map(QualityLevel::get),
            })
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        if self.records.is_empty() {
            w.write_record([
                "subject",
                "finger",
                "sample",
                "profile",
                "realness",
                "coop",
                "path",
                "quality_level",
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
        let expected = [
            "subject",
            "finger",
            "sample",
            "profile",
            "realness",
            "coop",
            "path",
            "quality_level",
        ];
        if header.iter().ne(expected) {
            return Err(Error::Format(format!(
                "unexpected manifest header: {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (line, row) in r.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::Format(format!("manifest row {}: {e}", line + 2)))?;
            let key = SampleKey {
                subject: row.subject,
                finger: row.finger,
                sample: row.sample,
                profile: row.profile,
                realness: row.realness,
                coop: parse_coop(&row.coop)?,
            };
            if (key.realness == Realness::Real) != key.coop.is_none() {
                return Err(Error::Format(format!(
                    "record {key}: cooperation mode applies to fakes only"
                )));
            }
            records.push(SampleRecord {
                key,
                path: row.path,
                quality_level: row.quality_level.map(QualityLevel::new).transpose()?,
            });
        }
        Self::new(records)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_csv()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_csv(&bytes)
    }
}

/// Shape and seeding of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub subjects: u32,
    pub fingers_per_subject: u32,
    pub samples_per_finger: u32,
    pub profiles: Vec<SensorProfile>,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

impl Default for CorpusSpec {
    /// 17 subjects, 4 fingers each, 4 samples, all three sensors.
    fn default() -> Self {
        Self {
            subjects: 17,
            fingers_per_subject: 4,
            samples_per_finger: 4,
            profiles: SensorProfile::defaults(),
            seed: 0,
            width: DEFAULT_DIMS.0,
            height: DEFAULT_DIMS.1,
        }
    }
}

/// One rendered capture.
#[derive(Debug, Clone)]
pub struct Capture {
    pub key: SampleKey,
    pub image: FingerprintImage,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.fingers_per_subject == 0 || self.samples_per_finger == 0 {
            return Err(Error::param("corpus counts must be at least 1"));
        }
        if self.profiles.is_empty() {
            return Err(Error::param("at least one sensor profile is required"));
        }
        let mut kinds: Vec<SensorKind> = self.profiles.iter().map(|p| p.kind).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.profiles.len() {
            return Err(Error::param("duplicate sensor profile"));
        }
        self.profiles.iter().try_for_each(SensorProfile::validate)
    }

    /// All (subject, finger) identities, 1-based.
    pub fn fingers(&self) -> Vec<(u32, u32)> {
        (1..=self.subjects)
            .flat_map(|s| (1..=self.fingers_per_subject).map(move |f| (s, f)))
            .collect()
    }

    pub fn finger_params(&self, subject: u32, finger: u32) -> GeneratorParams {
        let seed = seed::derive(self.seed, &[TAG_FINGER, subject as u64, finger as u64]);
        GeneratorParams::random(seed, self.width, self.height)
    }

    /// Renders every capture of one finger, across all profiles. Output is
    /// independent of profile order and of which other fingers are rendered.
    pub fn finger_captures(&self, subject: u32, finger: u32) -> Result<Vec<Capture>> {
        let master = MasterPrint::generate(&self.finger_params(subject, finger), self.width, self.height)?;
        let modes = [
            (Realness::Real, None),
            (Realness::Fake, Some(Cooperation::Cooperative)),
            (Realness::Fake, Some(Cooperation::NonCooperative)),
        ];
        let mut out = Vec::new();
        for profile in &self.profiles {
            for (mode_idx, &(realness, coop)) in modes.iter().enumerate() {
                for sample in 1..=self.samples_per_finger {
                    let key = SampleKey {
                        subject,
                        finger,
                        sample,
                        profile: profile.kind,
                        realness,
                        coop,
                    };
                    let path = [
                        subject as u64,
                        finger as u64,
                        profile.kind.tag(),
                        mode_idx as u64,
                        sample as u64,
                    ];
                    let capture_seed = seed::derive(self.seed, &[&[TAG_CAPTURE][..], &path].concat());
                    let degrade_seed = seed::derive(self.seed, &[&[TAG_DEGRADE][..], &path].concat());
                    let s = match coop {
                        None => profile.real_penalty,
                        Some(mode) => severity(profile.fake_penalty, mode, profile.noncoop_increment),
                    };
                    let image = degrade_with_severity(&master.impression(capture_seed), s, degrade_seed);
                    out.push(Capture { key, image });
                }
            }
        }
        Ok(out)
    }

    /// Renders the whole corpus in memory, sorted by key.
    pub fn captures(&self) -> Result<Vec<Capture>> {
        self.validate()?;
        let per_finger: Vec<Vec<Capture>> = self
            .fingers()
            .into_par_iter()
            .map(|(s, f)| self.finger_captures(s, f))
            .collect::<Result<_>>()?;
        let mut all: Vec<Capture> = per_finger.into_iter().flatten().collect();
        all.sort_by_key(|c| c.key);
        Ok(all)
    }
}

/// Writes every capture as PGM under `<out_dir>/images` plus the manifest.
pub fn build_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    let image_dir = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let per_finger: Vec<Vec<SampleRecord>> = spec
        .fingers()
        .into_par_iter()
        .map(|(s, f)| {
            spec.finger_captures(s, f)?
                .into_iter()
                .map(|c| {
                    let name = c.key.file_name();
                    io::save_pgm(&c.image, &image_dir.join(&name))?;
                    Ok(SampleRecord {
                        key: c.key,
                        path: format!("{IMAGE_DIR}/{name}"),
                        quality_level: None,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let manifest = CorpusManifest::new(per_finger.into_iter().flatten().collect())?;
    manifest.write(out_dir)?;
    Ok(manifest)
}
