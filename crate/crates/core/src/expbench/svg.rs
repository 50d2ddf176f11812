//! Tiny deterministic SVG plotting: line charts and bar charts, no deps.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 62.0;
const MR: f64 = 18.0;
const MT: f64 = 34.0;
const MB: f64 = 46.0;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str, xr: (f64, f64), yr: (f64, f64)) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        out,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{:.1}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        W / 2.0
    );
    let _ = write!(
        out,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{:.1}" stroke="black"/><line x1="{ML}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        H - MB,
        H - MB,
        W - MR,
        H - MB
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = ML + f * (W - ML - MR);
        let y = H - MB + 18.0;
        let v = xr.0 + f * (xr.1 - xr.0);
        let _ = write!(
            out,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="middle">{}</text><line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            fmt_tick(v),
            H - MB,
            H - MB + 4.0
        );
        let yv = yr.0 + f * (yr.1 - yr.0);
        let ypix = H - MB - f * (H - MT - MB);
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><line x1="{:.1}" y1="{ypix:.1}" x2="{ML}" y2="{ypix:.1}" stroke="black"/>"#,
            ML - 8.0,
            ypix + 4.0,
            fmt_tick(yv),
            ML - 4.0
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text><text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{y_label}</text>"#,
        (W + ML - MR) / 2.0,
        H - 8.0,
        (H - MB + MT) / 2.0,
        (H - MB + MT) / 2.0
    );
}

/// Multi-series line chart with a small legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xr = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| ML + (x - xr.0) / (xr.1 - xr.0) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - yr.0) / (yr.1 - yr.0) * (H - MT - MB);

    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, xr, yr);
    for s in series {
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, sx(x), sy(y));
        }
        let dash = if s.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = write!(
            out,
            r#"<polyline points="{path}" fill="none" stroke="{}" stroke-width="1.4"{dash}/>"#,
            s.color
        );
    }
    // Legend: first few labeled series only, to stay readable.
    for (i, s) in series.iter().filter(|s| !s.label.is_empty()).take(8).enumerate() {
        let y = MT + 14.0 * i as f64 + 4.0;
        let dash = if s.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = write!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="1.4"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - MR - 150.0,
            W - MR - 120.0,
            s.color,
            W - MR - 114.0,
            y + 4.0,
            s.label
        );
    }
    out.push_str("</svg>");
    out
}

/// Bar chart with optional symmetric error bars.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64, f64)]) -> String {
    let yr = axis_range(
        bars.iter()
            .flat_map(|(_, v, e)| [0.0, v + e, v - e].into_iter()),
    );
    let xr = (0.0, bars.len() as f64);
    let sy = |y: f64| H - MB - (y - yr.0) / (yr.1 - yr.0) * (H - MT - MB);
    let bw = (W - ML - MR) / bars.len() as f64;

    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, xr, yr);
    for (i, (label, v, e)) in bars.iter().enumerate() {
        let x = ML + i as f64 * bw + bw * 0.2;
        let w = bw * 0.6;
        let y = sy(*v);
        let y0 = sy(0.0f64.max(yr.0));
        let _ = write!(
            out,
            r##"<rect x="{x:.1}" y="{:.1}" width="{w:.1}" height="{:.1}" fill="#4878a8"/>"##,
            y.min(y0),
            (y0 - y).abs()
        );
        if *e > 0.0 {
            let cx = x + w / 2.0;
            let _ = write!(
                out,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                sy(v + e),
                sy(v - e)
            );
        }
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            x + w / 2.0,
            H - MB + 18.0
        );
    }
    out.push_str("</svg>");
    out
}
