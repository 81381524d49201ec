//! Minimal SVG output: matrix heatmaps and line charts.
//!
//! Heatmaps use a 256-step linear colormap running from white (step 0) to
//! dark blue `#08306b` (step 255). A value `v` is drawn with step
//! `round(255 · (v − min) / (max − min))`; a constant matrix is drawn
//! entirely with step 0. The minimum and maximum are printed under the grid.

use std::fmt::Write as _;

use phasefac::RMatrix;

pub const COLORMAP_STEPS: usize = 256;
const LOW: [f64; 3] = [255.0, 255.0, 255.0];
const HIGH: [f64; 3] = [8.0, 48.0, 107.0];

/// Colormap entry `step` as `#rrggbb`.
pub fn color(step: usize) -> String {
    let t = step.min(COLORMAP_STEPS - 1) as f64 / (COLORMAP_STEPS - 1) as f64;
    let c: Vec<u8> = (0..3).map(|i| (LOW[i] + t * (HIGH[i] - LOW[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Colormap step for `v` on the scale `[min, max]`.
pub fn step(v: f64, min: f64, max: f64) -> usize {
    if !(max > min) || !v.is_finite() {
        return 0;
    }
    (((v - min) / (max - min)).clamp(0.0, 1.0) * (COLORMAP_STEPS - 1) as f64).round() as usize
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of `m`, optionally labelling rows and columns.
pub fn heatmap(m: &RMatrix, title: &str, labels: Option<&[String]>) -> String {
    let (rows, cols) = m.shape();
    let cell = if rows.max(cols) > 40 { 6.0 } else { 40.0 };
    let margin = if labels.is_some() { 80.0 } else { 20.0 };
    let top = 40.0;
    let width = margin + cols as f64 * cell + 20.0;
    let height = top + rows as f64 * cell + 60.0;
    let (min, max) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (min, max) = if m.is_empty() { (0.0, 0.0) } else { (min, max) };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{margin}" y="20">{}</text>"#, escape(title));
    for j in 0..cols {
        for i in 0..rows {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                margin + j as f64 * cell,
                top + i as f64 * cell,
                color(step(m[(i, j)], min, max))
            );
        }
    }
    if let Some(labels) = labels {
        for (i, l) in labels.iter().enumerate().take(rows) {
            let y = top + (i as f64 + 0.5) * cell + 4.0;
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, margin - 4.0, escape(l));
        }
        for (j, l) in labels.iter().enumerate().take(cols) {
            let x = margin + (j as f64 + 0.5) * cell;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
                top + rows as f64 * cell + 14.0,
                escape(&l.chars().take(4).collect::<String>())
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{margin}" y="{}">min = {min:.6}, max = {max:.6}</text>"#,
        height - 12.0
    );
    s.push_str("</svg>\n");
    s
}

/// One line on a chart.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

/// Line chart over the given x and y ranges with an optional dashed
/// reference level.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    y_range: (f64, f64),
    reference: Option<(f64, &str)>,
) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (x0, x1) = if xs.is_empty() { (0.0, 1.0) } else if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
    let (y0, y1) = y_range;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * (h - top - bottom);
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, left - 6.0, py(y) + 4.0);
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, px(x), h - bottom + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + w - right) / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(y_label)
    );
    if let Some((level, name)) = reference {
        let y = py(level);
        let _ = writeln!(
            s,
            r##"<path d="M{left},{y:.1} H{}" stroke="#888888" stroke-dasharray="4 3"/><text x="{}" y="{:.1}" fill="#888888" text-anchor="end">{}</text>"##,
            w - right,
            w - right,
            y - 4.0,
            escape(name)
        );
    }
    for (n, ser) in series.iter().enumerate() {
        let c = PALETTE[n % PALETTE.len()];
        let d: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        if !d.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, d.join(" "));
        }
        for &(x, y) in ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, px(x), py(y));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
            left + 10.0,
            top + 14.0 + 14.0 * n as f64,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints_and_monotonicity() {
        assert_eq!(color(0), "#ffffff");
        assert_eq!(color(255), "#08306b");
        let steps: Vec<usize> = (0..=10).map(|i| step(i as f64, 0.0, 10.0)).collect();
        assert_eq!(steps[0], 0);
        assert_eq!(steps[10], 255);
        assert!(steps.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constant_matrix_renders_one_color() {
        let svg = heatmap(&RMatrix::zeros(4, 4), "zero", None);
        let fills: std::collections::BTreeSet<&str> =
            svg.match_indices("fill=\"#").map(|(i, _)| &svg[i + 6..i + 13]).collect();
        assert_eq!(fills.len(), 1);
        assert!(svg.contains("min = 0.000000, max = 0.000000"));
    }

    #[test]
    fn heatmap_has_one_rect_per_cell() {
        let m = RMatrix::from_fn(3, 5, |i, j| (i + j) as f64);
        let svg = heatmap(&m, "t", None);
        assert_eq!(svg.matches("<rect").count(), 15);
        assert!(svg.contains("min = 0.000000, max = 6.000000"));
    }

    #[test]
    fn line_chart_draws_each_series() {
        let a = [(0.2, 0.1), (0.4, 0.3)];
        let b = [(0.2, -0.5), (0.4, 0.9)];
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[Series { label: "a", points: &a }, Series { label: "b", points: &b }],
            (-2.0, 1.0),
            Some((-0.5, "chance")),
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("chance"));
    }
}
