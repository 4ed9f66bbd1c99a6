//! Static SVG rendering of mean accuracy-rejection curves.

use std::fmt::Write;

use crate::evaluate::MeanCurve;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;

fn polyline(curve: &MeanCurve, y_lo: f64, y_hi: f64, colour: &str, dashed: bool) -> String {
    let sx = |r: f64| MARGIN + r * (WIDTH - 2.0 * MARGIN);
    let sy = |a: f64| HEIGHT - MARGIN - (a - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let points: Vec<String> = curve
        .fractions
        .iter()
        .zip(&curve.mean)
        .map(|(&r, &a)| format!("{:.2},{:.2}", sx(r), sy(a)))
        .collect();
    format!(
        r#"<polyline fill="none" stroke="{colour}" stroke-width="2"{} points="{}"/>"#,
        if dashed { r#" stroke-dasharray="6,4""# } else { "" },
        points.join(" ")
    )
}

/// Mean curve of one criterion, optionally with a baseline curve dashed.
pub fn arc_svg(curve: &MeanCurve, baseline: Option<&MeanCurve>) -> String {
    let all = curve
        .mean
        .iter()
        .chain(baseline.into_iter().flat_map(|b| b.mean.iter()));
    let lo = all.clone().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = all.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let (y_lo, y_hi) = if hi - lo < 1e-6 {
        (lo - 0.05, hi + 0.05)
    } else {
        (lo, hi)
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">rejection fraction</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" text-anchor="middle">0</text>"#, y0 + 16.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="middle">1</text>"#, y0 + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{y_lo:.3}</text>"#,
        x0 - 4.0,
        y0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{y_hi:.3}</text>"#,
        x0 - 4.0,
        y1 + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle">accuracy vs rejection: {}</text>"#,
        WIDTH / 2.0,
        curve.criterion
    );
    if let Some(b) = baseline {
        let _ = writeln!(s, "{}", polyline(b, y_lo, y_hi, "gray", true));
    }
    let _ = writeln!(s, "{}", polyline(curve, y_lo, y_hi, "steelblue", false));
    s.push_str("</svg>\n");
    s
}
