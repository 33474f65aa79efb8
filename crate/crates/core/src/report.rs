//! Minimal SVG line charts of per-level means with ±1 std whiskers.

use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// `(mean, std)` per x position.
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders series against categorical x labels. The y axis spans the data
/// range (including whiskers), padded and always containing `[0, 1]`'s
/// intersection with the data.
pub fn line_chart(title: &str, y_label: &str, x_labels: &[String], series: &[Series]) -> String {
    let finite = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(m, sd)| m.is_finite() && sd.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(m, sd)| {
        (lo.min(m - sd), hi.max(m + sd))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let n = x_labels.len().max(1);
    let x_at = |i: usize| MARGIN + plot_w * (i as f64 + 0.5) / n as f64;
    let y_at = |v: f64| MARGIN + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<path d="M{MARGIN} {MARGIN} V{} H{}" stroke="black" fill="none"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            MARGIN - 4.0,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    for (i, label) in x_labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x_at(i),
            HEIGHT - MARGIN + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = s
            .points
            .iter()
            .enumerate()
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(i, &(m, sd))| (x_at(i), m, if sd.is_finite() { sd } else { 0.0 }))
            .collect();
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{x:.2},{:.2}", y_at(m))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for &(x, m, sd) in &pts {
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                y_at(m - sd),
                y_at(m + sd),
                y_at(m)
            );
        }
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            ly - 9.0,
            WIDTH - MARGIN - 94.0,
            ly,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
