//! Deterministic SVG line plots of time-series CSV files.
//!
//! Output depends only on the data and options: fixed canvas, fixed
//! palette, coordinates rounded to two decimals, no timestamps.

use std::fmt::Write as _;

use crate::error::{CliError, CliResult, Kind};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub width: f64,
    pub height: f64,
    pub title: Option<String>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            width: 800.0,
            height: 480.0,
            title: None,
        }
    }
}

/// One curve: label and `(x, y)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Curves of each named column against `t`.
pub fn time_curves(t: &[f64], columns: &[(String, Vec<f64>)]) -> Vec<Curve> {
    columns
        .iter()
        .map(|(label, ys)| Curve {
            label: label.clone(),
            points: t.iter().copied().zip(ys.iter().copied()).collect(),
        })
        .collect()
}

/// A single phase-plane curve `(x(t), y(t))`.
pub fn phase_curve(x: (&str, &[f64]), y: (&str, &[f64])) -> Curve {
    Curve {
        label: format!("{} vs {}", y.0, x.0),
        points: x.1.iter().copied().zip(y.1.iter().copied()).collect(),
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders `curves` into an SVG document. Non-finite points are skipped.
pub fn render_svg(curves: &[Curve], x_label: &str, opts: &PlotOptions) -> CliResult<String> {
    let xs = bounds(curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)));
    let ys = bounds(curves.iter().flat_map(|c| c.points.iter().map(|p| p.1)));
    let ((x0, x1), (y0, y1)) = match (xs, ys) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(CliError::new(Kind::Runtime, "nothing to plot: no finite points")),
    };
    let (w, h) = (opts.width, opts.height);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    if let Some(t) = &opts.title {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            left + pw / 2.0,
            esc(t)
        );
    }
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-size=\"11\">{}</text>",
            esc(text)
        );
    };
    label(&mut s, left, top + ph + 16.0, "start", &tick(x0));
    label(&mut s, left + pw, top + ph + 16.0, "end", &tick(x1));
    label(&mut s, left + pw / 2.0, top + ph + 36.0, "middle", x_label);
    label(&mut s, left - 6.0, top + ph, "end", &tick(y0));
    label(&mut s, left - 6.0, top + 10.0, "end", &tick(y1));

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>",
            pts.join(" ")
        );
        let ly = top + 12.0 + 16.0 * i as f64;
        let lx = left + pw + 10.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\"/>",
            ly - 4.0,
            lx + 16.0,
            ly - 4.0
        );
        label(&mut s, lx + 20.0, ly, "start", &c.label);
    }
    s.push_str("</svg>\n");
    Ok(s)
}
