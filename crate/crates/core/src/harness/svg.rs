//! Minimal line charts with a log-scaled lambda axis.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    /// `(lambda, y)` pairs; non-finite `y` values are skipped.
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Lambda to log10 position; zero sits one decade left of the smallest
/// positive value.
fn x_position(lambda: f64, zero_at: f64) -> f64 {
    if lambda > 0.0 {
        lambda.log10()
    } else {
        zero_at
    }
}

/// Renders one polyline per non-empty series.
pub fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|p| p.1.is_finite())
        .collect();
    let min_pos = all
        .iter()
        .map(|p| p.0)
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let zero_at = if min_pos.is_finite() { min_pos.log10() - 1.0 } else { 0.0 };
    let xs: Vec<f64> = all.iter().map(|p| x_position(p.0, zero_at)).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
    let (mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);

    let mut ticks: Vec<f64> = all.iter().map(|p| p.0).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for l in ticks {
        let x = sx(x_position(l, zero_at));
        let label = if l == 0.0 { "0".to_string() } else { format!("{l}") };
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            TOP + ph + 14.0,
            escape(&label)
        );
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(y) + 3.0,
            format_args!("{y:.4}")
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">lambda (log scale)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.1.is_finite()).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(l, y)| format!("{:.2},{:.2}", sx(x_position(l, zero_at)), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(&s.name)
        );
        let ly = TOP + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            LEFT + pw + 10.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
