//! Minimal static line plots, one panel per stacked subplot.

use std::fmt::Write;

pub struct Panel<'a> {
    pub title: &'a str,
    pub series: Vec<(&'a str, Vec<(f64, f64)>)>,
    /// Horizontal reference lines.
    pub guides: Vec<f64>,
}

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    for (idx, panel) in panels.iter().enumerate() {
        let top = idx as f64 * PANEL_HEIGHT;
        let points = || panel.series.iter().flat_map(|(_, pts)| pts.iter());
        let (x0, x1) = extent(points().map(|p| p.0));
        let (y0, y1) = extent(points().map(|p| p.1).chain(panel.guides.iter().copied()));
        let (left, right) = (MARGIN, WIDTH - 12.0);
        let (upper, lower) = (top + 24.0, top + PANEL_HEIGHT - 28.0);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
        let sy = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);

        writeln!(s, r#"<text x="{left}" y="{}">{}</text>"#, top + 16.0, panel.title).unwrap();
        writeln!(
            s,
            r##"<rect x="{left}" y="{upper}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
            right - left,
            lower - upper
        )
        .unwrap();
        for (v, y) in [(y0, lower), (y1, upper)] {
            writeln!(s, r#"<text x="4" y="{:.1}">{v:.2}</text>"#, y + 4.0).unwrap();
        }
        for (v, x) in [(x0, left), (x1, right - 40.0)] {
            writeln!(s, r#"<text x="{x:.1}" y="{:.1}">{v:.0} s</text>"#, lower + 16.0).unwrap();
        }
        for g in &panel.guides {
            let y = sy(*g);
            writeln!(
                s,
                r##"<line x1="{left}" x2="{right}" y1="{y:.2}" y2="{y:.2}" stroke="#aaa" stroke-dasharray="4 3"/>"##
            )
            .unwrap();
        }
        for (k, (name, pts)) in panel.series.iter().enumerate() {
            let path: Vec<String> = pts
                .iter()
                .filter(|(_, y)| y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>{name}</title></polyline>"#,
                COLORS[k % COLORS.len()],
                path.join(" ")
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
