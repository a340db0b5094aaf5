//! Minimal SVG line charts for error traces with shaded attack intervals.

use std::fmt::Write as _;
use std::path::Path;

use crate::dos::DosSchedule;
use crate::error::{Error, Result};
use crate::sim::Trajectory;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One overlaid series: a label and `(t, y)` samples.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

impl<'a> Series<'a> {
    /// Component `index` of the tracking error, decimated to at most
    /// `max_points` samples.
    pub fn error_component(label: &'a str, traj: &Trajectory, index: usize, max_points: usize) -> Result<Self> {
        if let Some(e) = traj.e.first() {
            if index >= e.len() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory '{label}' has no error column e{}",
                    index + 1
                )));
            }
        }
        let stride = (traj.len() / max_points.max(1)).max(1);
        let points = traj
            .times
            .iter()
            .zip(&traj.e)
            .step_by(stride)
            .map(|(t, e)| (*t, e[index]))
            .collect();
        Ok(Series { label, points })
    }
}

fn bounds(series: &[Series], schedule: Option<&DosSchedule>) -> (f64, f64, f64, f64) {
    let mut t = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(ti, yi) in &s.points {
            if ti.is_finite() && yi.is_finite() {
                t = (t.0.min(ti), t.1.max(ti));
                y = (y.0.min(yi), y.1.max(yi));
            }
        }
    }
    if let Some(s) = schedule {
        t = (t.0.min(0.0), t.1.max(s.horizon()));
    }
    if !t.0.is_finite() {
        t = (0.0, 1.0);
    }
    if !y.0.is_finite() {
        y = (-1.0, 1.0);
    }
    if t.1 - t.0 <= 0.0 {
        t.1 = t.0 + 1.0;
    }
    if y.1 - y.0 <= 0.0 {
        y = (y.0 - 1.0, y.1 + 1.0);
    }
    let pad = 0.05 * (y.1 - y.0);
    (t.0, t.1, y.0 - pad, y.1 + pad)
}

/// Renders overlaid series with attack intervals shaded in grey.
pub fn render_svg(title: &str, y_label: &str, series: &[Series], schedule: Option<&DosSchedule>) -> String {
    let (t0, t1, y0, y1) = bounds(series, schedule);
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(s) = schedule {
        for iv in s.intervals() {
            let (a, b) = (sx(iv.start.max(t0)), sx(iv.end().min(t1)));
            if b > a {
                let _ = writeln!(
                    out,
                    r##"<rect x="{a:.2}" y="{MARGIN}" width="{:.2}" height="{ph}" fill="#bbbbbb" fill-opacity="0.45"/>"##,
                    b - a
                );
            }
        }
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (t, y) = (t0 + f * (t1 - t0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(t),
            HEIGHT - MARGIN + 18.0,
            tick(t)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            sy(y) + 4.0,
            tick(y)
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
            WIDTH - MARGIN,
            sy(0.0),
            sy(0.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !s.points.is_empty() {
            let path: Vec<String> = s
                .points
                .iter()
                .filter(|(t, y)| t.is_finite() && y.is_finite())
                .map(|&(t, y)| format!("{:.2},{:.2}", sx(t), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.4" points="{}"/>"#,
                path.join(" ")
            );
        }
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN - 170.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" x2="{:.2}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{}", (v * 100.0).round() / 100.0)
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the overlay of error component `index` for every run.
pub fn write_error_plot(
    path: &Path,
    title: &str,
    runs: &[(&str, &Trajectory)],
    index: usize,
    schedule: Option<&DosSchedule>,
) -> Result<()> {
    let series = runs
        .iter()
        .map(|(label, tr)| Series::error_component(label, tr, index, 4000))
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(path, render_svg(title, &format!("e{}", index + 1), &series, schedule))?;
    Ok(())
}
