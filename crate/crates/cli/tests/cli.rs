use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fpvuln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpvuln"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 2 subjects x 1 finger x 2 samples, optical only.
fn small_corpus(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus");
    let o = fpvuln(&[
        "gen-corpus",
        "--corpus-dir",
        s(&corpus),
        "--subjects",
        "2",
        "--fingers",
        "1",
        "--samples",
        "2",
        "--profiles",
        "optical",
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "real=4 fake_coop=4 fake_noncoop=4");
    corpus
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn assert_error_line(o: &Output, kind: &str) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{kind}]: ")), "{err}");
}

#[test]
fn minimal_corpus_summary_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let o = fpvuln(&[
            "gen-corpus",
            "--corpus-dir",
            s(&dir),
            "--subjects",
            "1",
            "--fingers",
            "1",
            "--samples",
            "1",
            "--profiles",
            "optical",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o).trim(), "real=1 fake_coop=1 fake_noncoop=1");
        manifests.push(fs::read(dir.join("manifest.csv")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn extract_evaluate_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let o = fpvuln(&["extract", "--corpus-dir", s(&corpus), "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "templates=24");
    let first = tree(&corpus.join("templates"));
    assert_eq!(first.len(), 24);
    let o = fpvuln(&["extract", "--corpus-dir", s(&corpus)]);
    assert!(o.status.success());
    assert_eq!(tree(&corpus.join("templates")), first);

    let mut reports = Vec::new();
    for run in ["o1", "o2"] {
        let out = tmp.path().join(run);
        let o = fpvuln(&[
            "evaluate",
            "--corpus-dir",
            s(&corpus),
            "--out",
            s(&out),
            "--far-targets",
            "10",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(tree(&out.join("reports")));
    }
    assert_eq!(reports[0].len(), 2);
    assert_eq!(reports[0], reports[1]);
    let json = String::from_utf8(reports[0][0].1.clone()).unwrap();
    assert_eq!(json.matches("\"target_far\"").count(), 1);

    let det = fs::read_to_string(tmp.path().join("o1/det/minutiae_optical_nom.csv")).unwrap();
    let lines: Vec<&str> = det.lines().collect();
    assert_eq!(lines[0], "fmr_pct,fnmr_pct");
    assert_eq!(lines[1], "100,0");
    assert_eq!(*lines.last().unwrap(), "0,100");
    assert!(tmp.path().join("o1/table1.md").exists());
    assert!(tmp.path().join("o1/quality/optical_real.svg").exists());
}

#[test]
fn matcher_selection_and_det_export() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let o = fpvuln(&["extract", "--corpus-dir", s(&corpus), "--matcher", "ridge"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "templates=12");
    let out = tmp.path().join("det");
    let o = fpvuln(&[
        "det-export",
        "--corpus-dir",
        s(&corpus),
        "--out",
        s(&out),
        "--matcher",
        "ridge",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(tree(&out.join("det")).len(), 10);
    // Minutiae templates were never extracted.
    let o = fpvuln(&[
        "evaluate",
        "--corpus-dir",
        s(&corpus),
        "--out",
        s(&tmp.path().join("e")),
    ]);
    assert_error_line(&o, "lookup");
    assert!(!tmp.path().join("e").exists());
}

#[test]
fn quality_hist_writes_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("q");
    let o = fpvuln(&["quality-hist", "--corpus-dir", s(&corpus), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "files=6");
    let manifest = fs::read_to_string(corpus.join("manifest.csv")).unwrap();
    assert!(manifest.lines().skip(1).all(|l| !l.ends_with(',')), "{manifest}");
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    let out = tmp.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# run\ncorpus-dir = {}\nout={}\nmatcher=minutiae\nfar-targets=1,10\n",
            s(&corpus),
            s(&out)
        ),
    )
    .unwrap();
    assert!(fpvuln(&["extract", "--config", s(&cfg)]).status.success());
    let o = fpvuln(&["evaluate", "--config", s(&cfg), "--far-targets", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim().split(' ').next(), Some("reports=1"));
    let json = fs::read_to_string(out.join("reports/minutiae_optical.json")).unwrap();
    assert_eq!(json.matches("\"target_far\"").count(), 1);

    fs::write(&cfg, "colour=blue\n").unwrap();
    assert_error_line(&fpvuln(&["extract", "--config", s(&cfg)]), "parameter");
}

#[test]
fn errors_are_single_prefixed_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    assert_error_line(&fpvuln(&["extract", "--corpus-dir", s(&missing)]), "io");
    assert_error_line(&fpvuln(&["evaluate", "--profiles", "plastic"]), "parameter");
    assert_error_line(&fpvuln(&["evaluate", "--far-targets", "0"]), "parameter");
    assert_error_line(&fpvuln(&["evaluate", "--bogus"]), "usage");
    assert_error_line(&fpvuln(&["extract", "--jobs", "0"]), "parameter");
}

#[test]
fn corrupt_image_names_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let victim = "images/2_1_1_optical_real_na.pgm";
    fs::write(corpus.join(victim), b"P5\n").unwrap();
    let o = fpvuln(&["extract", "--corpus-dir", s(&corpus)]);
    assert_error_line(&o, "format");
    assert!(stderr(&o).contains("2_1_1_optical_real_na"), "{}", stderr(&o));
    assert!(!corpus.join("templates").exists());
}

#[test]
fn one_finger_corpus_cannot_be_evaluated() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    let o = fpvuln(&[
        "gen-corpus",
        "--corpus-dir",
        s(&corpus),
        "--subjects",
        "1",
        "--fingers",
        "1",
        "--samples",
        "2",
        "--profiles",
        "optical",
    ]);
    assert!(o.status.success());
    assert!(fpvuln(&["extract", "--corpus-dir", s(&corpus)]).status.success());
    let out = tmp.path().join("o");
    assert_error_line(
        &fpvuln(&["evaluate", "--corpus-dir", s(&corpus), "--out", s(&out)]),
        "protocol",
    );
    assert!(!out.exists());
}

#[test]
fn unwritable_corpus_dir_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = fpvuln(&[
        "gen-corpus",
        "--corpus-dir",
        s(&blocker.join("sub")),
        "--subjects",
        "1",
        "--fingers",
        "1",
        "--samples",
        "1",
    ]);
    assert_error_line(&o, "io");
}
