//! Minimal static SVG line charts; no plotting dependency needed for two
//! axes and a handful of series.

use std::fmt::Write as _;
use std::path::Path;

pub struct Series {
    pub label: String,
    /// Sorted by x.
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 90.0;
const MARGIN_R: f64 = 90.0;
const MARGIN_T: f64 = 60.0;
const MARGIN_B: f64 = 70.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Scale {
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        if (self.max - self.min).abs() < f64::EPSILON {
            return (self.lo_px + self.hi_px) / 2.0;
        }
        self.lo_px + (v - self.min) / (self.max - self.min) * (self.hi_px - self.lo_px)
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if (max - min).abs() < f64::EPSILON {
        return (min - 0.5, max + 0.5);
    }
    let pad = (max - min) * 0.08;
    (min - pad, max + pad)
}

fn ticks(min: f64, max: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| min + (max - min) * i as f64 / n as f64)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e9 {
        format!("{:.1}G", v / 1e9)
    } else if v.abs() >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v.abs() >= 1e4 {
        format!("{:.0}k", v / 1e3)
    } else if (v.fract()).abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Single-axis multi-series line chart.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> std::io::Result<()> {
    let mut svg = header(title);
    let all_points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all_points.is_empty() {
        let _ = write!(
            svg,
            r##"<text x="{}" y="{}" text-anchor="middle" font-size="16" fill="#888">no data</text>"##,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        return finish(path, svg);
    }
    let (xmin, xmax) = bounds(all_points.iter().map(|p| p.0));
    let (ymin, ymax) = bounds(all_points.iter().map(|p| p.1).chain(std::iter::once(0.0)));
    let xs = Scale { min: xmin, max: xmax, lo_px: MARGIN_L, hi_px: WIDTH - MARGIN_R };
    let ys = Scale { min: ymin, max: ymax, lo_px: HEIGHT - MARGIN_B, hi_px: MARGIN_T };

    axes(&mut svg, &xs, &ys, x_label, y_label, "");
    for (i, s) in series.iter().enumerate() {
        polyline(&mut svg, s, &xs, &ys, COLORS[i % COLORS.len()]);
    }
    legend(&mut svg, series, 0);
    finish(path, svg)
}

/// Two y-axes: `left` series against the left scale, `right` against the
/// right scale.
pub fn dual_axis_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_left_label: &str,
    y_right_label: &str,
    left: &[Series],
    right: &[Series],
) -> std::io::Result<()> {
    let mut svg = header(title);
    if left.iter().all(|s| s.points.is_empty()) && right.iter().all(|s| s.points.is_empty()) {
        let _ = write!(
            svg,
            r##"<text x="{}" y="{}" text-anchor="middle" font-size="16" fill="#888">no data</text>"##,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        return finish(path, svg);
    }
    let all_x: Vec<f64> = left
        .iter()
        .chain(right.iter())
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let (xmin, xmax) = bounds(all_x.into_iter());
    let (lmin, lmax) = bounds(
        left.iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(std::iter::once(0.0)),
    );
    let (rmin, rmax) = bounds(
        right
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(std::iter::once(0.0)),
    );
    let xs = Scale { min: xmin, max: xmax, lo_px: MARGIN_L, hi_px: WIDTH - MARGIN_R };
    let ysl = Scale { min: lmin, max: lmax, lo_px: HEIGHT - MARGIN_B, hi_px: MARGIN_T };
    let ysr = Scale { min: rmin, max: rmax, lo_px: HEIGHT - MARGIN_B, hi_px: MARGIN_T };

    axes(&mut svg, &xs, &ysl, x_label, y_left_label, y_right_label);
    // Right-axis ticks.
    for t in ticks(rmin, rmax, 5) {
        let y = ysr.map(t);
        let _ = write!(
            svg,
            r##"<text x="{}" y="{}" text-anchor="start" font-size="11" fill="#555">{}</text>"##,
            WIDTH - MARGIN_R + 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for (i, s) in left.iter().enumerate() {
        polyline(&mut svg, s, &xs, &ysl, COLORS[i % COLORS.len()]);
    }
    for (i, s) in right.iter().enumerate() {
        polyline_dashed(&mut svg, s, &xs, &ysr, COLORS[(left.len() + i) % COLORS.len()]);
    }
    let all: Vec<&Series> = left.iter().chain(right.iter()).collect();
    legend_refs(&mut svg, &all);
    finish(path, svg)
}

fn header(title: &str) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="30" text-anchor="middle" font-size="17">{}</text>
"##,
        WIDTH / 2.0,
        xml_escape(title)
    );
    svg
}

fn axes(svg: &mut String, xs: &Scale, ys: &Scale, x_label: &str, y_label: &str, y_right: &str) {
    let x0 = xs.lo_px;
    let x1 = xs.hi_px;
    let y0 = ys.lo_px;
    let y1 = ys.hi_px;
    let _ = write!(
        svg,
        r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333"/>
"##
    );
    for t in ticks(xs.min, xs.max, 6) {
        let x = xs.map(t);
        let _ = write!(
            svg,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="#333"/><text x="{x}" y="{}" text-anchor="middle" font-size="11" fill="#555">{}</text>
"##,
            y0 + 5.0,
            y0 + 20.0,
            fmt_tick(t)
        );
    }
    for t in ticks(ys.min, ys.max, 5) {
        let y = ys.map(t);
        let _ = write!(
            svg,
            r##"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="#333"/><line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#eee"/><text x="{}" y="{}" text-anchor="end" font-size="11" fill="#555">{}</text>
"##,
            x0 - 5.0,
            xs.hi_px,
            x0 - 9.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = write!(
        svg,
        r##"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>
<text x="22" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 22 {})">{}</text>
"##,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        xml_escape(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        xml_escape(y_label)
    );
    if !y_right.is_empty() {
        let x = WIDTH - 20.0;
        let _ = write!(
            svg,
            r##"<text x="{x}" y="{}" text-anchor="middle" font-size="13" transform="rotate(90 {x} {})">{}</text>
"##,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            xml_escape(y_right)
        );
    }
}

fn path_points(s: &Series, xs: &Scale, ys: &Scale) -> String {
    s.points
        .iter()
        .map(|(x, y)| format!("{:.1},{:.1}", xs.map(*x), ys.map(*y)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn polyline(svg: &mut String, s: &Series, xs: &Scale, ys: &Scale, color: &str) {
    let pts = path_points(s, xs, ys);
    let _ = write!(
        svg,
        r##"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>
"##
    );
    for (x, y) in &s.points {
        let _ = write!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>
"##,
            xs.map(*x),
            ys.map(*y)
        );
    }
}

fn polyline_dashed(svg: &mut String, s: &Series, xs: &Scale, ys: &Scale, color: &str) {
    let pts = path_points(s, xs, ys);
    let _ = write!(
        svg,
        r##"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>
"##
    );
    for (x, y) in &s.points {
        let _ = write!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="7" height="7" fill="{color}"/>
"##,
            xs.map(*x) - 3.5,
            ys.map(*y) - 3.5
        );
    }
}

fn legend(svg: &mut String, series: &[Series], skip: usize) {
    let refs: Vec<&Series> = series.iter().skip(skip).collect();
    legend_refs(svg, &refs);
}

fn legend_refs(svg: &mut String, series: &[&Series]) {
    let mut x = MARGIN_L + 10.0;
    let y = MARGIN_T - 14.0;
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = write!(
            svg,
            r##"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}" font-size="12">{}</text>
"##,
            y - 10.0,
            x + 16.0,
            y,
            xml_escape(&s.label)
        );
        x += 20.0 + 8.0 * s.label.len() as f64 + 20.0;
    }
}

fn finish(path: &Path, mut svg: String) -> std::io::Result<()> {
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
