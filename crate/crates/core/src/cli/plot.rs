//! Static SVG learning curves.

use std::fmt::Write as _;

use crate::cli::metrics::MetricsRow;
use crate::{Error, Result};

/// Default moving-average window, in evaluations.
pub const DEFAULT_WINDOW: usize = 5;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Trailing moving average; each point averages up to `window` values ending
/// at it. A window of 1 returns the input.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let span = &values[lo..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// One labelled curve of `(step, eval_mean)` pairs, already smoothed.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn from_rows(label: impl Into<String>, rows: &[MetricsRow], window: usize) -> Self {
        let ys = smooth(&rows.iter().map(|r| r.eval_mean).collect::<Vec<_>>(), window);
        Self {
            label: label.into(),
            points: rows.iter().map(|r| r.step as f64).zip(ys).collect(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders eval mean against step, one polyline per series.
pub fn render_svg(series: &[Series], window: usize) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let (mut x0, mut x1) = all
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if x1 == x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 == y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        w,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            px(xv),
            b + 16.0,
            xv.round()
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.1}</text>"#,
            l - 6.0,
            py(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">step</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        w,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">eval mean (moving average, window {window})</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = t + 14.0 * i as f64;
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{color}">{}</text>"#,
            l + 10.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
