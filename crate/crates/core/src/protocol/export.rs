use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::DetPoint;
use super::ScoreSet;
use crate::error::{Error, Result};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
/// Rates are clipped to this band before the normal-deviate transform.
const DET_RANGE_PCT: (f64, f64) = (0.01, 99.99);
const DET_TICKS: [f64; 9] = [0.1, 1.0, 5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 95.0];

pub fn scores_csv(set: &ScoreSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["pair_id", "score"]).map_err(fail)?;
    for (p, s) in set.pairs.iter().zip(&set.scores) {
        w.write_record([p.id(), s.to_string()]).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn det_csv(curve: &[DetPoint]) -> String {
    let mut out = String::from("fmr_pct,fnmr_pct\n");
    for p in curve {
        let _ = writeln!(out, "{},{}", p.fmr, p.fnmr);
    }
    out
}

fn deviate(pct: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(pct.clamp(DET_RANGE_PCT.0, DET_RANGE_PCT.1) / 100.0)
}

fn axis(pct: f64, span: f64) -> f64 {
    let lo = deviate(DET_RANGE_PCT.0);
    let hi = deviate(DET_RANGE_PCT.1);
    (deviate(pct) - lo) / (hi - lo) * span
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = WIDTH + 2.0 * MARGIN,
        h = HEIGHT + 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN + WIDTH / 2.0,
        MARGIN / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// DET curve on normal-deviate axes: FMR horizontal, FNMR vertical.
pub fn det_svg(curves: &[(&str, &[DetPoint])], title: &str) -> String {
    const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let x = |pct: f64| MARGIN + axis(pct, WIDTH);
    let y = |pct: f64| MARGIN + HEIGHT - axis(pct, HEIGHT);
    let mut out = String::new();
    svg_open(&mut out, title);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH}" height="{HEIGHT}" fill="none" stroke="black"/>"#
    );
    for t in DET_TICKS {
        let (tx, ty) = (x(t), y(t));
        let _ = writeln!(
            out,
            r##"<line x1="{tx:.2}" y1="{MARGIN}" x2="{tx:.2}" y2="{:.2}" stroke="#ddd"/><line x1="{MARGIN}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#ddd"/>"##,
            MARGIN + HEIGHT,
            MARGIN + WIDTH
        );
        let _ = writeln!(
            out,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{t}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{t}</text>"#,
            MARGIN + HEIGHT + 15.0,
            MARGIN - 5.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">FMR (%)</text>"#,
        MARGIN + WIDTH / 2.0,
        MARGIN + HEIGHT + 35.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">FNMR (%)</text>"#,
        MARGIN + HEIGHT / 2.0,
        MARGIN + HEIGHT / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, p) in curve.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, x(p.fmr), y(p.fnmr));
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
        let ly = MARGIN + 15.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{}</text>"#,
            MARGIN + WIDTH - 8.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn histogram_csv(counts: &[usize; 5]) -> String {
    let mut out = String::from("level,count\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{},{c}", i + 1);
    }
    out
}

pub fn histogram_svg(counts: &[usize; 5], title: &str) -> String {
    let total: usize = counts.iter().sum();
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let slot = WIDTH / 5.0;
    let mut out = String::new();
    svg_open(&mut out, title);
    let base = MARGIN + HEIGHT;
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{:.2}" y2="{base}" stroke="black"/>"#,
        MARGIN + WIDTH
    );
    for (i, &c) in counts.iter().enumerate() {
        let h = HEIGHT * c as f64 / max;
        let bx = MARGIN + slot * i as f64 + slot * 0.15;
        let share = if total > 0 {
            100.0 * c as f64 / total as f64
        } else {
            0.0
        };
        let _ = writeln!(
            out,
            r##"<rect x="{bx:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#4c72b0"/>"##,
            base - h,
            slot * 0.7
        );
        let cx = bx + slot * 0.35;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{share:.1}%</text><text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base - h - 4.0,
            base + 15.0,
            i + 1
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">quality level</text>"#,
        MARGIN + WIDTH / 2.0,
        base + 35.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::metrics::compute_det;
    use crate::protocol::tests::manifest;
    use crate::protocol::{genuine_pairs, ScoreKind};
    use crate::synthdb::SensorKind;

    #[test]
    fn score_csv_layout() {
        let m = manifest(2, 2, 1);
        let pairs = genuine_pairs(&m, SensorKind::Optical);
        let n = pairs.len();
        let set = ScoreSet::new(ScoreKind::Genuine, pairs, vec![0.5; n]).unwrap();
        let text = String::from_utf8(scores_csv(&set).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "pair_id,score");
        assert_eq!(lines.len(), n + 1);
        assert!(lines[1].ends_with(",0.5") && lines[1].contains('|'));
    }

    #[test]
    fn det_csv_endpoints() {
        let det = compute_det(&[0.9, 0.4], &[0.5, 0.1]).unwrap();
        let text = det_csv(&det);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "fmr_pct,fnmr_pct");
        assert_eq!(lines[1], "100,0");
        assert_eq!(*lines.last().unwrap(), "0,100");
    }

    #[test]
    fn det_svg_is_well_formed() {
        let det = compute_det(&[0.9, 0.4, 0.7], &[0.5, 0.1]).unwrap();
        let svg = det_svg(&[("nom", &det)], "a < b");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<path").count(), 1);
    }

    #[test]
    fn deviate_axis_is_monotone() {
        let mut prev = -1.0;
        for p in [0.0, 0.01, 0.5, 10.0, 50.0, 90.0, 100.0] {
            let a = axis(p, 100.0);
            assert!(a >= prev);
            prev = a;
        }
        assert!((axis(50.0, 100.0) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_outputs() {
        let h = [3, 0, 1, 0, 2];
        assert_eq!(histogram_csv(&h), "level,count\n1,3\n2,0\n3,1\n4,0\n5,2\n");
        let svg = histogram_svg(&h, "q");
        assert_eq!(svg.matches("<rect x=").count(), 5);
        assert!(histogram_svg(&[0; 5], "empty").contains("0.0%"));
    }
}
