//! Log-log error plots as standalone SVG.

use std::fmt::Write as _;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub y: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct LogAxis {
    lo: f64,
    hi: f64,
    start: f64,
    end: f64,
}

impl LogAxis {
    fn map(&self, v: f64) -> f64 {
        let t = (v.max(self.lo).log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10());
        self.start + t * (self.end - self.start)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        let a = self.lo.log10().round() as i32;
        let b = self.hi.log10().round() as i32;
        a..=b
    }
}

fn decade_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite() && *v > 0.0) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (1e-6, 1.0);
    }
    let lo = 10f64.powf(lo.log10().floor());
    let mut hi = 10f64.powf(hi.log10().ceil());
    if hi <= lo {
        hi = lo * 10.0;
    }
    (lo, hi)
}

/// Renders one band (CI) plus line (MSE) per series on log-log axes. When
/// every series has a single x value, points with error bars are drawn
/// instead.
pub fn render_error_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.x)).collect();
    let single_x = {
        let mut distinct = xs.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        distinct.len() <= 1
    };
    let (x_lo, x_hi) = if single_x {
        let x = xs.first().copied().filter(|x| *x > 0.0).unwrap_or(1.0);
        decade_bounds([x / 3.0, x * 3.0].into_iter())
    } else {
        decade_bounds(xs.iter().copied())
    };
    let (y_lo, y_hi) = decade_bounds(
        series
            .iter()
            .flat_map(|s| s.points.iter().flat_map(|p| [p.y, p.low, p.high])),
    );
    let x_axis = LogAxis { lo: x_lo, hi: x_hi, start: LEFT, end: WIDTH - RIGHT };
    let y_axis = LogAxis { lo: y_lo, hi: y_hi, start: HEIGHT - BOTTOM, end: TOP };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );

    for k in x_axis.decades() {
        let x = x_axis.map(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">10<tspan dy="-6" font-size="9">{k}</tspan></text>"##,
            TOP,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 20.0
        );
    }
    for k in y_axis.decades() {
        let y = y_axis.map(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">10<tspan dy="-6" font-size="9">{k}</tspan></text>"##,
            WIDTH - RIGHT,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - RIGHT - LEFT,
        HEIGHT - BOTTOM - TOP
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(22 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(svg, r#"<g class="series" data-label="{}">"#, escape(&s.label));
        if single_x || s.points.len() == 1 {
            for p in &s.points {
                let (x, y) = (x_axis.map(p.x), y_axis.map(p.y));
                let _ = writeln!(
                    svg,
                    r#"<line class="error-bar" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/><circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#,
                    y_axis.map(p.low),
                    y_axis.map(p.high)
                );
            }
        } else {
            let upper = s.points.iter().map(|p| format!("{:.2},{:.2}", x_axis.map(p.x), y_axis.map(p.high)));
            let lower = s.points.iter().rev().map(|p| format!("{:.2},{:.2}", x_axis.map(p.x), y_axis.map(p.low)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                band.join(" ")
            );
            let line: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x_axis.map(p.x), y_axis.map(p.y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        let ly = TOP + 20.0 + 22.0 * k as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{:.1}" width="18" height="10" fill="{color}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 9.0,
            lx + 26.0,
            escape(&s.label)
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}
