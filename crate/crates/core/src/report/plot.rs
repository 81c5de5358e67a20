//! Minimal hand-written SVG line plots: probability or level on y, scan
//! index on x.

use super::{CilgCurves, CipgCurve, ScanReport};
use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 32.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Series<'a> {
    label: String,
    color: &'a str,
    points: &'a [(u64, f64)],
}

fn panel(out: &mut String, top: f64, title: &str, y_range: (f64, f64), series: &[Series<'_>]) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x0 = MARGIN_LEFT;
    let y0 = top + MARGIN_TOP;
    let max_n = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let (ylo, yhi) = y_range;
    let sx = |n: u64| x0 + plot_w * n as f64 / max_n;
    let sy = |v: f64| y0 + plot_h * (1.0 - (v - ylo) / (yhi - ylo));

    let _ = writeln!(
        out,
        r#"<text x="{x0:.2}" y="{:.2}" font-size="13" font-family="sans-serif">{title}</text>"#,
        top + 18.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#444"/>"##
    );
    for (label, v) in [
        (ylo, ylo),
        (yhi, yhi),
        ((ylo + yhi) / 2.0, (ylo + yhi) / 2.0),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end" font-family="sans-serif">{label:.2}</text>"#,
            x0 - 4.0,
            sy(v) + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end" font-family="sans-serif">n = {}</text>"#,
        x0 + plot_w,
        y0 + plot_h + 14.0,
        max_n as u64
    );
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let pts = s
            .points
            .iter()
            .map(|&(n, v)| format!("{:.2},{:.2}", sx(n), sy(v.clamp(ylo, yhi))))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{pts}"/>"#,
            s.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{}" font-family="sans-serif">{}</text>"#,
            x0 + 6.0 + 70.0 * i as f64,
            y0 + plot_h + 14.0,
            s.color,
            s.label
        );
    }
}

fn document(panels: usize, body: &str) -> String {
    let height = PANEL_HEIGHT * panels.max(1) as f64;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {WIDTH:.0} {height:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn cipg_series(curve: &CipgCurve) -> Series<'_> {
    Series {
        label: format!("type {}", curve.type_id),
        color: PALETTE[curve.type_id as usize % PALETTE.len()],
        points: &curve.points,
    }
}

fn cilg_series(cilg: &CilgCurves) -> Vec<Series<'_>> {
    let mut series: Vec<Series<'_>> = cilg
        .traits
        .iter()
        .enumerate()
        .map(|(m, pts)| Series {
            label: format!("L{m}"),
            color: "#bbbbbb",
            points: pts,
        })
        .collect();
    series.push(Series {
        label: "avg".to_string(),
        color: "#000000",
        points: &cilg.average,
    });
    series
}

pub fn render_cipg_svg(curve: &CipgCurve) -> String {
    let mut body = String::new();
    panel(
        &mut body,
        0.0,
        &format!("CIPG type {}", curve.type_id),
        (0.0, 1.0),
        &[cipg_series(curve)],
    );
    document(1, &body)
}

pub fn render_cilg_svg(cilg: &CilgCurves) -> String {
    let mut body = String::new();
    panel(&mut body, 0.0, "CILG", (1.0, 10.0), &cilg_series(cilg));
    document(1, &body)
}

/// One panel per CIPG curve followed by the shared CILG panel.
pub(super) fn render_report_svg(report: &ScanReport) -> String {
    let mut body = String::new();
    let mut top = 0.0;
    for curve in report.cipg.values() {
        panel(
            &mut body,
            top,
            &format!("CIPG type {}", curve.type_id),
            (0.0, 1.0),
            &[cipg_series(curve)],
        );
        top += PANEL_HEIGHT;
    }
    panel(
        &mut body,
        top,
        "CILG",
        (1.0, 10.0),
        &cilg_series(&report.cilg),
    );
    document(report.cipg.len() + 1, &body)
}
