//! Minimal deterministic SVG line charts over a daily axis.

use std::fmt::Write;

use chrono::NaiveDate;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const GAP: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub struct Line {
    pub name: String,
    /// One value per day; `None` leaves a gap.
    pub values: Vec<Option<f64>>,
}

impl Line {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Line {
            name: name.into(),
            values,
        }
    }

    pub fn dense(name: impl Into<String>, values: &[f64]) -> Self {
        Self::new(name, values.iter().map(|&v| Some(v)).collect())
    }
}

#[derive(Default)]
pub struct Panel {
    pub title: String,
    pub lines: Vec<Line>,
    /// Day indices that get a dashed vertical marker.
    pub markers: Vec<usize>,
}

/// Stacks `panels` vertically over the days `start..start+days`. The config
/// hash is written into a leading comment.
pub fn render(start: NaiveDate, days: usize, panels: &[Panel], config_hash: &str) -> String {
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + GAP) + 10.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, "<!-- config_hash: {config_hash} -->");
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let x_of = |i: usize| MARGIN_LEFT + plot_w * i as f64 / (days.max(2) - 1) as f64;

    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN_TOP + p as f64 * (PANEL_HEIGHT + GAP);
        let bottom = top + PANEL_HEIGHT;
        let (lo, hi) = extent(panel);
        let y_of = |v: f64| bottom - (v - lo) / (hi - lo) * PANEL_HEIGHT;

        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN_LEFT}" y="{:.1}" font-size="13" font-weight="bold">{}</text>"#,
            top - 8.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_LEFT}" y="{top:.1}" width="{plot_w:.1}" height="{PANEL_HEIGHT}" fill="none" stroke="#999"/>"##
        );
        for frac in [0.0, 0.5, 1.0] {
            let v = lo + (hi - lo) * frac;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                y_of(v) + 4.0,
                tick(v)
            );
        }
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ccc"/>"##,
                MARGIN_LEFT + plot_w,
                y = y_of(0.0)
            );
        }
        for &m in &panel.markers {
            let x = x_of(m);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.1}" x2="{x:.1}" y1="{top:.1}" y2="{bottom:.1}" stroke="#444" stroke-dasharray="5,4"/>"##
            );
            let date = start + chrono::Duration::days(m as i64);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
                x + 3.0,
                top + 12.0,
                date.format("%m-%d")
            );
        }
        for (l, line) in panel.lines.iter().enumerate() {
            let colour = PALETTE[l % PALETTE.len()];
            for segment in segments(&line.values) {
                let pts: Vec<String> = segment
                    .iter()
                    .map(|&(i, v)| format!("{:.1},{:.1}", x_of(i), y_of(v)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = top + 14.0 + 16.0 * l as f64;
            let lx = MARGIN_LEFT + plot_w + 10.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 16.0,
                lx + 20.0,
                ly + 4.0,
                escape(&line.name)
            );
        }
        // first and last date under the axis
        let end = start + chrono::Duration::days(days.saturating_sub(1) as i64);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN_LEFT}" y="{:.1}">{start}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{end}</text>"#,
            bottom + 14.0,
            MARGIN_LEFT + plot_w,
            bottom + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn extent(panel: &Panel) -> (f64, f64) {
    let vals = panel
        .lines
        .iter()
        .flat_map(|l| l.values.iter().flatten().copied())
        .filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        (lo, lo + 1.0)
    } else {
        (lo, hi)
    }
}

/// Runs of consecutive defined values.
fn segments(values: &[Option<f64>]) -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(v) if v.is_finite() => cur.push((i, *v)),
            _ => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
