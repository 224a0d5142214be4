//! Emit-only SVG plots: boxplots from summary-JSON quantile groups and
//! scatterplots from report CSV columns.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn svg_header(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
}

fn axis_label(out: &mut String, x: f64, y: f64, text: &str, anchor: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"{anchor}\">{text}</text>"
    );
}

/// Boxplot of (group name, [q025, q25, q50, q75, q975]) summaries.
pub fn boxplot_svg(groups: &[(String, [f64; 5])]) -> String {
    let mut out = String::new();
    svg_header(&mut out);
    let finite: Vec<f64> = groups
        .iter()
        .flat_map(|(_, q)| q.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let y_of = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN);
    let n = groups.len().max(1) as f64;
    let slot = (W - 2.0 * MARGIN) / n;
    for (i, (name, q)) in groups.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let bw = (slot * 0.5).min(60.0);
        let [q025, q25, q50, q75, q975] = *q;
        if !q50.is_finite() {
            continue;
        }
        // whiskers
        let _ = writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y_of(q025),
            y_of(q975)
        );
        for v in [q025, q975] {
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
                cx - bw / 4.0,
                y_of(v),
                cx + bw / 4.0,
                y_of(v)
            );
        }
        // box and median
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{:.1}\" fill=\"#9ecae1\" stroke=\"black\"/>",
            cx - bw / 2.0,
            y_of(q75),
            (y_of(q25) - y_of(q75)).max(0.5)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>",
            cx - bw / 2.0,
            y_of(q50),
            cx + bw / 2.0,
            y_of(q50)
        );
        axis_label(&mut out, cx, H - MARGIN + 18.0, name, "middle");
    }
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        axis_label(&mut out, MARGIN - 8.0, y_of(v) + 4.0, &format!("{v:.3}"), "end");
    }
    out.push_str("</svg>\n");
    out
}

/// Scatterplot with an identity line and optional band offset.
pub fn scatter_svg(xs: &[f64], ys: &[f64], x_name: &str, y_name: &str, band: Option<f64>) -> String {
    let mut out = String::new();
    svg_header(&mut out);
    let finite: Vec<f64> = xs.iter().chain(ys.iter()).copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let x_of = |v: f64| MARGIN + (v - lo) / (hi - lo) * (W - 2.0 * MARGIN);
    let y_of = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN);
    // identity line and band
    let _ = writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\"/>",
        x_of(lo),
        y_of(lo),
        x_of(hi),
        y_of(hi)
    );
    if let Some(d) = band {
        for sign in [-1.0, 1.0] {
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>",
                x_of(lo),
                y_of(lo + sign * d),
                x_of(hi),
                y_of(hi + sign * d)
            );
        }
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let outside = band.map(|d| (x - y).abs() > d).unwrap_or(false);
        let fill = if outside { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{fill}\" fill-opacity=\"0.7\"/>",
            x_of(x),
            y_of(y)
        );
    }
    axis_label(&mut out, W / 2.0, H - 14.0, x_name, "middle");
    axis_label(&mut out, 16.0, H / 2.0, y_name, "middle");
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        axis_label(&mut out, MARGIN - 8.0, y_of(v) + 4.0, &format!("{v:.2}"), "end");
        axis_label(&mut out, x_of(v), H - MARGIN + 18.0, &format!("{v:.2}"), "middle");
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(path: &Path, svg: &str) -> CliResult<()> {
    if !svg.starts_with("<svg") {
        return Err(CliError::Data("malformed SVG payload".into()));
    }
    std::fs::write(path, svg.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxplot_contains_groups() {
        let svg = boxplot_svg(&[
            ("a".into(), [0.1, 0.2, 0.5, 0.7, 0.9]),
            ("b".into(), [0.0, 0.1, 0.2, 0.3, 0.4]),
        ]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">a</text>"));
        assert!(svg.contains("rect"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn scatter_marks_band_outliers() {
        let svg = scatter_svg(&[0.1, 0.9], &[0.1, 0.1], "x", "y", Some(0.2));
        assert!(svg.contains("#d62728"));
        assert!(svg.contains("#1f77b4"));
    }
}
