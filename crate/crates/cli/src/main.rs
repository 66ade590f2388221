use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpvuln::pipeline::{self, RunConfig};
use fpvuln::protocol::{CiMethod, Matcher};
use fpvuln::stats::DEFAULT_BOOTSTRAP_RESAMPLES;
use fpvuln::synthdb::{CorpusManifest, CorpusSpec, SensorKind, SensorProfile};
use fpvuln::Error;

#[derive(Parser, Debug)]
#[command(
    name = "fpvuln",
    version,
    about = "Direct-attack evaluation of fingerprint verification systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic real/fake corpus.
    GenCorpus(GenArgs),
    /// Extract minutiae and ridge templates for every corpus record.
    Extract(CommonArgs),
    /// Score all protocol pairs and write reports, tables, DET curves and quality histograms.
    Evaluate(CommonArgs),
    /// Assess capture quality and write per-slice histograms.
    QualityHist(CommonArgs),
    /// Write DET curves only.
    DetExport(CommonArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MatcherChoice {
    Minutiae,
    Ridge,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CiChoice {
    BetaBinomial,
    Bootstrap,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    matcher: Option<MatcherChoice>,
    /// Comma-separated subset of optical,capacitive,thermal.
    #[arg(long)]
    profiles: Option<String>,
    /// Comma-separated FAR targets in percent.
    #[arg(long)]
    far_targets: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    ci: Option<CiChoice>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    subjects: Option<u32>,
    #[arg(long)]
    fingers: Option<u32>,
    #[arg(long)]
    samples: Option<u32>,
}

type Result<T> = std::result::Result<T, Error>;

/// Values from flags, falling back to the config file.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Parameter(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
                file.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parameter(format!("config key {key}: cannot parse '{v}'"))),
        }
    }

    fn text(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.file.get(key).cloned())
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.file.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Parameter(format!("unknown config key '{k}'"))),
            None => Ok(()),
        }
    }
}

const COMMON_KEYS: [&str; 9] = [
    "corpus-dir",
    "out",
    "matcher",
    "profiles",
    "far-targets",
    "seed",
    "jobs",
    "ci",
    "bootstrap-resamples",
];
const GEN_KEYS: [&str; 3] = ["subjects", "fingers", "samples"];

fn list<T: FromStr<Err = Error>>(text: &str) -> Result<Vec<T>> {
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(T::from_str)
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Parameter(format!("empty list '{text}'")));
    }
    Ok(items)
}

fn parse_targets(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad FAR target '{s}'")))
        })
        .collect()
}

fn value_enum<T: ValueEnum>(s: &str) -> std::result::Result<T, String> {
    T::from_str(s, true)
}

struct Resolved {
    run: RunConfig,
    jobs: Option<usize>,
    settings: Settings,
}

fn resolve(args: CommonArgs, extra_keys: &[&str], reads_corpus: bool) -> Result<Resolved> {
    let settings = Settings::load(args.config.as_deref())?;
    let allowed: Vec<&str> = COMMON_KEYS.iter().chain(extra_keys).copied().collect();
    settings.check_keys(&allowed)?;
    let mut run = RunConfig::default();
    if let Some(d) = settings.get(args.corpus_dir, "corpus-dir")? {
        run.corpus_dir = d;
    }
    if let Some(d) = settings.get(args.out, "out")? {
        run.out_dir = d;
    }
    let matcher = match args.matcher {
        Some(m) => Some(m),
        None => settings
            .file
            .get("matcher")
            .map(|v| value_enum::<MatcherChoice>(v).map_err(|_| Error::Parameter(format!("unknown matcher '{v}'"))))
            .transpose()?,
    };
    run.matchers = match matcher.unwrap_or(MatcherChoice::Both) {
        MatcherChoice::Minutiae => vec![Matcher::Minutiae],
        MatcherChoice::Ridge => vec![Matcher::Ridge],
        MatcherChoice::Both => Matcher::ALL.to_vec(),
    };
    let profiles = settings.text(args.profiles, "profiles");
    if let Some(p) = &profiles {
        let mut profiles: Vec<SensorKind> = list(p)?;
        profiles.sort();
        profiles.dedup();
        run.profiles = profiles;
    }
    if let Some(t) = settings.text(args.far_targets, "far-targets") {
        run.far_targets = parse_targets(&t)?;
    }
    if let Some(s) = settings.get(args.seed, "seed")? {
        run.seed = s;
    }
    let ci = match args.ci {
        Some(c) => Some(c),
        None => settings
            .file
            .get("ci")
            .map(|v| value_enum::<CiChoice>(v).map_err(|_| Error::Parameter(format!("unknown ci method '{v}'"))))
            .transpose()?,
    };
    let resamples = settings.get(args.bootstrap_resamples, "bootstrap-resamples")?;
    run.ci = match ci.unwrap_or(CiChoice::BetaBinomial) {
        CiChoice::BetaBinomial => CiMethod::BetaBinomial,
        CiChoice::Bootstrap => CiMethod::Bootstrap {
            resamples: resamples.unwrap_or(DEFAULT_BOOTSTRAP_RESAMPLES),
            seed: run.seed,
        },
    };
    let jobs = settings.get(args.jobs, "jobs")?;
    if jobs == Some(0) {
        return Err(Error::Parameter("--jobs must be at least 1".into()));
    }
    run.validate()?;
    if profiles.is_none() && reads_corpus {
        // Default to whatever the corpus holds.
        run.profiles = CorpusManifest::read(&run.corpus_dir)?.profiles();
    }
    Ok(Resolved { run, jobs, settings })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus(g) => {
            let r = resolve(g.common, &GEN_KEYS, false)?;
            let defaults = CorpusSpec::default();
            let spec = CorpusSpec {
                subjects: r.settings.get(g.subjects, "subjects")?.unwrap_or(defaults.subjects),
                fingers_per_subject: r
                    .settings
                    .get(g.fingers, "fingers")?
                    .unwrap_or(defaults.fingers_per_subject),
                samples_per_finger: r
                    .settings
                    .get(g.samples, "samples")?
                    .unwrap_or(defaults.samples_per_finger),
                profiles: r
                    .run
                    .profiles
                    .iter()
                    .map(|&k| SensorProfile::with_defaults(k))
                    .collect(),
                seed: r.run.seed,
                ..defaults
            };
            let dir = r.run.corpus_dir.clone();
            let manifest = with_pool(r.jobs, || pipeline::gen_corpus(&spec, &dir))?;
            println!("{}", pipeline::counts_summary(&manifest));
        }
        Command::Extract(a) => {
            let r = resolve(a, &[], true)?;
            let n = with_pool(r.jobs, || pipeline::extract(&r.run))?;
            println!("templates={n}");
        }
        Command::Evaluate(a) => {
            let r = resolve(a, &[], true)?;
            let (reports, files) = with_pool(r.jobs, || pipeline::evaluate(&r.run))?;
            println!("reports={} files={}", reports.len(), files.len());
        }
        Command::QualityHist(a) => {
            let r = resolve(a, &[], true)?;
            let files = with_pool(r.jobs, || pipeline::quality_hist(&r.run))?;
            println!("files={}", files.len());
        }
        Command::DetExport(a) => {
            let r = resolve(a, &[], true)?;
            let files = with_pool(r.jobs, || pipeline::det_export(&r.run))?;
            println!("files={}", files.len());
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
