//! Self-contained SVG line plot of `log₁₀ ‖θ‖` against `t`.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Renders `(t, ‖θ‖²)` samples; non-positive values are skipped.
pub fn decay_svg(series: &[(f64, f64)], title: &str) -> String {
    let pts: Vec<(f64, f64)> = series.iter().filter(|(_, y)| *y > 0.0).map(|&(t, y)| (t, 0.5 * y.log10())).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    if pts.len() < 2 {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no decay data</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let tspan = if t1 > t0 { t1 - t0 } else { 1.0 };
    let px = |t: f64| MARGIN + (t - t0) / tspan * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (t, y) = (t0 + f * tspan, y0 + f * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.2}</text>"#, px(t), bottom + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, left - 6.0, py(y) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">log10 |theta|</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let path: Vec<String> = pts.iter().map(|&(t, y)| format!("{:.2},{:.2}", px(t), py(y))).collect();
    let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.join(" "));
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_one_vertex_per_positive_sample() {
        let series: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, (-(i as f64)).exp())).chain([(5.0, 0.0)]).collect();
        let svg = decay_svg(&series, "run <a>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(poly.matches(',').count(), 5);
        assert!(svg.contains("run &lt;a&gt;"));
    }

    #[test]
    fn empty_series_renders_a_placeholder() {
        assert!(decay_svg(&[(0.0, 0.0)], "x").contains("no decay data"));
    }
}
