//! CSV and SVG emission for spectra and training curves.

use std::fmt::Write as _;

/// Formats a value with 9 significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.8e}")
}

/// Two-column CSV with a header line.
pub fn csv_two_columns(header: (&str, &str), rows: &[(f64, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for &(a, b) in rows {
        let _ = writeln!(out, "{},{}", sig9(a), sig9(b));
    }
    out
}

/// Parses a two-column numeric CSV produced by [`csv_two_columns`].
pub fn parse_two_columns(text: &str) -> Option<Vec<(f64, f64)>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (a, b) = l.split_once(',')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        })
        .collect()
}

/// A single polyline in a fixed 800×400 viewBox with a 40-unit margin.
pub fn svg_polyline(title: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const M: f64 = 40.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let sx = if x1 > x0 { (W - 2.0 * M) / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { (H - 2.0 * M) / (y1 - y0) } else { 0.0 };
    let mut pts = String::new();
    for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let _ = write!(
            pts,
            "{:.2},{:.2} ",
            M + (x - x0) * sx,
            H - M - (y - y0) * sy
        );
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 400" width="800" height="400">"#
    );
    let _ = writeln!(svg, r#"<rect width="800" height="400" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="400" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{M} {} H{} M{M} {M} V{}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        pts.trim_end()
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
