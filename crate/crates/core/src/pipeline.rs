//! Batch operations behind the command-line tool. Every operation reads the
//! corpus directory, and writes its artifacts only after all computation has
//! succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::{io, preprocess, FingerprintImage};
use crate::minutiae::{extract_minutiae, MinutiaTemplate};
use crate::protocol::export;
use crate::protocol::report::{markdown_table, DEFAULT_FAR_TARGETS};
use crate::protocol::{evaluate_scores, CiMethod, EvaluationReport, Matcher, ProfileScores, TemplateStore};
use crate::quality::{assess_quality, quality_histogram, QualityLevel};
use crate::ridgefeat::{extract_ridge_features, GaborBank, RidgeFeatureVector, DEFAULT_GRID};
use crate::synthdb::{build_corpus, Cooperation, CorpusManifest, CorpusSpec, Realness, SampleKey, SensorKind};

pub const TEMPLATE_DIR: &str = "templates";
pub const REPORT_DIR: &str = "reports";
pub const DET_DIR: &str = "det";
pub const SCORE_DIR: &str = "scores";
pub const QUALITY_DIR: &str = "quality";
pub const TABLE_FILE: &str = "table1.md";
const MINUTIAE_EXT: &str = "min";
const RIDGE_EXT: &str = "rfv";
const IMAGE_DPI: u32 = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub matchers: Vec<Matcher>,
    pub profiles: Vec<SensorKind>,
    pub far_targets: Vec<f64>,
    pub seed: u64,
    pub ci: CiMethod,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            matchers: Matcher::ALL.to_vec(),
            profiles: SensorKind::ALL.to_vec(),
            far_targets: DEFAULT_FAR_TARGETS.to_vec(),
            seed: 0,
            ci: CiMethod::BetaBinomial,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::param("at least one sensor profile is required"));
        }
        if self.matchers.is_empty() {
            return Err(Error::param("at least one matcher is required"));
        }
        if self.far_targets.is_empty() {
            return Err(Error::param("at least one FAR target is required"));
        }
        if let Some(t) = self.far_targets.iter().find(|&&t| !(t > 0.0 && t <= 100.0)) {
            return Err(Error::param(format!("FAR target {t} outside (0, 100]")));
        }
        Ok(())
    }
}

/// Counts line printed after corpus generation.
pub fn counts_summary(m: &CorpusManifest) -> String {
    format!(
        "real={} fake_coop={} fake_noncoop={}",
        m.count(Realness::Real, None),
        m.count(Realness::Fake, Some(Cooperation::Cooperative)),
        m.count(Realness::Fake, Some(Cooperation::NonCooperative)),
    )
}

/// Removes `dir` when an operation that created it fails.
fn cleanup_on_error<T>(dir: &Path, created: bool, r: Result<T>) -> Result<T> {
    if r.is_err() && created {
        let _ = fs::remove_dir_all(dir);
    }
    r
}

pub fn gen_corpus(spec: &CorpusSpec, dir: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    let created = !dir.exists();
    cleanup_on_error(dir, created, build_corpus(spec, dir))
}

/// Both template kinds for one image.
pub fn features(img: &FingerprintImage, bank: &GaborBank) -> Result<(MinutiaTemplate, RidgeFeatureVector)> {
    let pre = preprocess(img)?;
    let minutiae = extract_minutiae(&pre.image, &pre.mask);
    let ridge = extract_ridge_features(&pre.image, bank, DEFAULT_GRID, DEFAULT_GRID, &pre.mask)?;
    Ok((minutiae, ridge))
}

fn template_path(root: &Path, matcher: Matcher, key: &SampleKey) -> PathBuf {
    let ext = match matcher {
        Matcher::Minutiae => MINUTIAE_EXT,
        Matcher::Ridge => RIDGE_EXT,
    };
    root.join(matcher.as_str()).join(format!("{key}.{ext}"))
}

fn selected<'a>(
    m: &'a CorpusManifest,
    profiles: &'a [SensorKind],
) -> impl Iterator<Item = &'a crate::synthdb::SampleRecord> {
    m.records.iter().filter(move |r| profiles.contains(&r.key.profile))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Extracts templates for every selected record into
/// `<corpus>/templates/{minutiae,ridge}`. Returns the number of artifacts.
/// The previous template tree is replaced only once extraction succeeded.
pub fn extract(cfg: &RunConfig) -> Result<usize> {
    cfg.validate()?;
    let manifest = CorpusManifest::read(&cfg.corpus_dir)?;
    let bank = GaborBank::default();
    let staging = cfg.corpus_dir.join(format!("{TEMPLATE_DIR}.partial"));
    let _ = fs::remove_dir_all(&staging);
    let records: Vec<_> = selected(&manifest, &cfg.profiles).collect();
    let result = records
        .par_iter()
        .map(|r| {
            let key = r.key.to_string();
            let img = io::load_image(&cfg.corpus_dir.join(&r.path), IMAGE_DPI).map_err(|e| e.for_record(&key))?;
            let (minutiae, ridge) = features(&img, &bank).map_err(|e| e.for_record(&key))?;
            let mut written = 0;
            for &matcher in &cfg.matchers {
                let bytes = match matcher {
                    Matcher::Minutiae => minutiae.to_text().into_bytes(),
                    Matcher::Ridge => ridge.to_bytes(),
                };
                write_file(&template_path(&staging, matcher, &r.key), &bytes)?;
                written += 1;
            }
            Ok(written)
        })
        .collect::<Result<Vec<usize>>>()
        .map(|v| v.into_iter().sum());
    let written = cleanup_on_error(&staging, true, result)?;
    let target = cfg.corpus_dir.join(TEMPLATE_DIR);
    for &matcher in &cfg.matchers {
        let dst = target.join(matcher.as_str());
        if dst.exists() {
            fs::remove_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
        }
        fs::create_dir_all(&target).map_err(|e| Error::io(&target, e))?;
        let src = staging.join(matcher.as_str());
        if src.exists() {
            fs::rename(&src, &dst).map_err(|e| Error::io(&dst, e))?;
        }
    }
    let _ = fs::remove_dir_all(&staging);
    Ok(written)
}

/// Loads persisted templates for the selected profiles.
pub fn load_templates(cfg: &RunConfig, manifest: &CorpusManifest) -> Result<TemplateStore> {
    let root = cfg.corpus_dir.join(TEMPLATE_DIR);
    let records: Vec<_> = selected(manifest, &cfg.profiles).collect();
    let read = |matcher: Matcher, key: &SampleKey| -> Result<Vec<u8>> {
        let path = template_path(&root, matcher, key);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingTemplate(format!("{key} ({matcher})")),
            _ => Error::io(&path, e),
        })
    };
    let mut store = TemplateStore::new();
    for &matcher in &cfg.matchers {
        match matcher {
            Matcher::Minutiae => {
                let loaded = records
                    .par_iter()
                    .map(|r| {
                        let text = String::from_utf8(read(matcher, &r.key)?)
                            .map_err(|e| Error::Format(e.to_string()).for_record(r.key.to_string()))?;
                        let t = MinutiaTemplate::from_text(&text).map_err(|e| e.for_record(r.key.to_string()))?;
                        Ok((r.key, t))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (k, t) in loaded {
                    store.insert_minutiae(k, t);
                }
            }
            Matcher::Ridge => {
                let loaded = records
                    .par_iter()
                    .map(|r| {
                        let v = RidgeFeatureVector::from_bytes(&read(matcher, &r.key)?)
                            .map_err(|e| e.for_record(r.key.to_string()))?;
                        Ok((r.key, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (k, v) in loaded {
                    store.insert_ridge(k, v);
                }
            }
        }
    }
    Ok(store)
}

/// Files produced by one operation, relative to the output directory.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    /// Writes every file; on failure, files written so far are removed.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (rel, bytes) in &self.files {
            let path = out_dir.join(rel);
            if let Err(e) = write_file(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn det_outputs(out: &mut Outputs, scores: &ProfileScores) -> Result<()> {
    let stem = format!("{}_{}", scores.matcher, scores.profile);
    for (scenario, curve) in scores.det_curves()? {
        let name = format!("{stem}_{scenario}");
        out.add(Path::new(DET_DIR).join(format!("{name}.csv")), export::det_csv(&curve));
        out.add(
            Path::new(DET_DIR).join(format!("{name}.svg")),
            export::det_svg(
                &[(scenario.as_str(), &curve)],
                &format!("{} {} {scenario}", scores.matcher, scores.profile),
            ),
        );
    }
    Ok(())
}

fn profile_scores(cfg: &RunConfig, manifest: &CorpusManifest, store: &TemplateStore) -> Result<Vec<ProfileScores>> {
    let mut all = Vec::new();
    for &matcher in &cfg.matchers {
        for &profile in &cfg.profiles {
            if !manifest.profiles().contains(&profile) {
                return Err(Error::Protocol(format!("corpus has no {profile} samples")));
            }
            all.push(ProfileScores::compute(manifest, matcher, profile, store)?);
        }
    }
    Ok(all)
}

/// Reports, Markdown table, score sets, DET curves and quality histograms.
pub fn evaluate(cfg: &RunConfig) -> Result<(Vec<EvaluationReport>, Vec<PathBuf>)> {
    cfg.validate()?;
    let manifest = CorpusManifest::read(&cfg.corpus_dir)?;
    let store = load_templates(cfg, &manifest)?;
    let mut out = Outputs::default();
    let mut reports = Vec::new();
    for scores in profile_scores(cfg, &manifest, &store)? {
        let report = evaluate_scores(&scores, &cfg.far_targets, cfg.ci)?;
        let stem = report.file_stem();
        out.add(Path::new(REPORT_DIR).join(format!("{stem}.json")), report.to_json()?);
        let sets = [
            ("genuine", &scores.genuine),
            ("impostor", &scores.impostor),
            ("coop_attack1", &scores.attack1[0]),
            ("noncoop_attack1", &scores.attack1[1]),
            ("coop_attack2", &scores.attack2[0]),
            ("noncoop_attack2", &scores.attack2[1]),
        ];
        for (name, set) in sets {
            out.add(
                Path::new(SCORE_DIR).join(format!("{stem}_{name}.csv")),
                export::scores_csv(set)?,
            );
        }
        det_outputs(&mut out, &scores)?;
        reports.push(report);
    }
    out.add(TABLE_FILE, markdown_table(&reports));
    let levels = quality_levels(cfg, &manifest)?;
    quality_outputs(&mut out, &manifest, &levels, &cfg.profiles);
    let written = out.write(&cfg.out_dir)?;
    Ok((reports, written))
}

/// DET curves only.
pub fn det_export(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let manifest = CorpusManifest::read(&cfg.corpus_dir)?;
    let store = load_templates(cfg, &manifest)?;
    let mut out = Outputs::default();
    for scores in profile_scores(cfg, &manifest, &store)? {
        det_outputs(&mut out, &scores)?;
    }
    out.write(&cfg.out_dir)
}

/// Level per manifest record (`None` outside the selected profiles). Levels
/// already stored in the manifest are reused.
fn quality_levels(cfg: &RunConfig, manifest: &CorpusManifest) -> Result<Vec<Option<QualityLevel>>> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            if !cfg.profiles.contains(&r.key.profile) {
                return Ok(None);
            }
            if let Some(level) = r.quality_level {
                return Ok(Some(level));
            }
            let key = r.key.to_string();
            let img = io::load_image(&cfg.corpus_dir.join(&r.path), IMAGE_DPI).map_err(|e| e.for_record(&key))?;
            let (_, level) = assess_quality(&img).map_err(|e| e.for_record(&key))?;
            Ok(Some(level))
        })
        .collect()
}

const QUALITY_SLICES: [(&str, Realness, Option<Cooperation>); 3] = [
    ("real", Realness::Real, None),
    ("fake_coop", Realness::Fake, Some(Cooperation::Cooperative)),
    ("fake_noncoop", Realness::Fake, Some(Cooperation::NonCooperative)),
];

fn quality_outputs(
    out: &mut Outputs,
    manifest: &CorpusManifest,
    levels: &[Option<QualityLevel>],
    profiles: &[SensorKind],
) {
    for &profile in profiles {
        for (slice, realness, coop) in QUALITY_SLICES {
            let picked: Vec<QualityLevel> = manifest
                .records
                .iter()
                .zip(levels)
                .filter(|(r, _)| r.key.profile == profile && r.key.realness == realness && r.key.coop == coop)
                .filter_map(|(_, l)| *l)
                .collect();
            let hist = quality_histogram(&picked);
            let stem = format!("{profile}_{slice}");
            out.add(
                Path::new(QUALITY_DIR).join(format!("{stem}.csv")),
                export::histogram_csv(&hist),
            );
            out.add(
                Path::new(QUALITY_DIR).join(format!("{stem}.svg")),
                export::histogram_svg(&hist, &format!("{profile} {slice} quality")),
            );
        }
    }
}

/// Assesses every selected record, stores the levels in the manifest and
/// writes histograms per profile and slice.
pub fn quality_hist(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut manifest = CorpusManifest::read(&cfg.corpus_dir)?;
    for r in manifest.records.iter_mut() {
        if cfg.profiles.contains(&r.key.profile) {
            r.quality_level = None;
        }
    }
    let levels = quality_levels(cfg, &manifest)?;
    let mut out = Outputs::default();
    quality_outputs(&mut out, &manifest, &levels, &cfg.profiles);
    let written = out.write(&cfg.out_dir)?;
    for (r, l) in manifest.records.iter_mut().zip(levels) {
        if l.is_some() {
            r.quality_level = l;
        }
    }
    manifest.write(&cfg.corpus_dir)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdb::SensorProfile;

    fn tiny_spec() -> CorpusSpec {
        CorpusSpec {
            subjects: 2,
            fingers_per_subject: 1,
            samples_per_finger: 2,
            profiles: vec![SensorProfile::optical()],
            seed: 5,
            ..CorpusSpec::default()
        }
    }

    fn config(dir: &Path) -> RunConfig {
        RunConfig {
            corpus_dir: dir.join("corpus"),
            out_dir: dir.join("out"),
            profiles: vec![SensorKind::Optical],
            far_targets: vec![10.0],
            ..RunConfig::default()
        }
    }

    #[test]
    fn end_to_end_tiny() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path());
        let m = gen_corpus(&tiny_spec(), &cfg.corpus_dir).unwrap();
        assert_eq!(counts_summary(&m), "real=4 fake_coop=4 fake_noncoop=4");
        assert_eq!(extract(&cfg).unwrap(), 2 * m.len());
        let (reports, files) = evaluate(&cfg).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| r.operating_points.len() == 1));
        assert!(files.iter().all(|f| f.exists()));
        assert!(cfg.out_dir.join(TABLE_FILE).exists());
        let det = fs::read_to_string(cfg.out_dir.join(DET_DIR).join("ridge_optical_nom.csv")).unwrap();
        assert_eq!(det.lines().nth(1), Some("100,0"));
        assert_eq!(det.lines().last(), Some("0,100"));
    }

    #[test]
    fn missing_templates_leave_no_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path());
        gen_corpus(&tiny_spec(), &cfg.corpus_dir).unwrap();
        let err = evaluate(&cfg).unwrap_err();
        assert_eq!(err.kind(), "lookup", "{err}");
        assert!(!cfg.out_dir.exists());
    }

    #[test]
    fn corrupt_image_names_record() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path());
        let m = gen_corpus(&tiny_spec(), &cfg.corpus_dir).unwrap();
        let victim = &m.records[3];
        fs::write(cfg.corpus_dir.join(&victim.path), b"P5 garbage").unwrap();
        let err = extract(&cfg).unwrap_err();
        assert!(err.to_string().contains(&victim.key.to_string()), "{err}");
        assert!(!cfg.corpus_dir.join(TEMPLATE_DIR).exists());
    }

    #[test]
    fn quality_hist_updates_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path());
        gen_corpus(&tiny_spec(), &cfg.corpus_dir).unwrap();
        let files = quality_hist(&cfg).unwrap();
        assert_eq!(files.len(), 6);
        let m = CorpusManifest::read(&cfg.corpus_dir).unwrap();
        assert!(m.records.iter().all(|r| r.quality_level.is_some()));
        let csv = fs::read_to_string(cfg.out_dir.join(QUALITY_DIR).join("optical_real.csv")).unwrap();
        let total: usize = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.far_targets = vec![0.0];
        assert!(cfg.validate().is_err());
        cfg.far_targets = vec![1.0];
        cfg.profiles.clear();
        assert!(cfg.validate().is_err());
    }
}
