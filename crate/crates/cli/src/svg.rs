//! Minimal SVG assembly. Fixed-precision coordinates keep output bytes
//! stable across runs.

use std::fmt::Write as _;

/// Series colors, reused across all plot kinds.
pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn f(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="{}"/>"#,
            f(x),
            f(y),
            f(w),
            f(h),
            fill,
            f(opacity)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{}"/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            stroke,
            f(width)
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            f(cx),
            f(cy),
            f(r),
            fill
        );
    }

    /// Support marker.
    pub fn square(&mut self, cx: f64, cy: f64, half: f64, fill: &str) {
        self.rect(cx - half, cy - half, 2.0 * half, 2.0 * half, fill, 1.0);
    }

    /// Classifier marker: an x of two strokes.
    pub fn cross(&mut self, cx: f64, cy: f64, half: f64, stroke: &str) {
        self.line(cx - half, cy - half, cx + half, cy + half, stroke, 2.0);
        self.line(cx - half, cy + half, cx + half, cy - half, stroke, 2.0);
    }

    fn points_attr(pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|&(x, y)| format!("{},{}", f(x), f(y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            Self::points_attr(pts),
            stroke,
            f(width)
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{}" fill-opacity="{}"/>"#,
            Self::points_attr(pts),
            fill,
            f(opacity)
        );
    }

    /// Opens a `<g class="...">`; close with [`Svg::group_end`]. Classes
    /// give the structural tests stable anchors.
    pub fn group_start(&mut self, class: &str) {
        let _ = writeln!(self.body, r#"<g class="{class}">"#);
    }

    pub fn group_end(&mut self) {
        self.body.push_str("</g>\n");
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif">{}</text>"#,
            f(x),
            f(y),
            f(size),
            escape(content)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n{}</svg>\n",
            f(self.width),
            f(self.height),
            f(self.width),
            f(self.height),
            f(self.width),
            f(self.height),
            self.body
        )
    }
}
