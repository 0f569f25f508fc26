//! Hand-rolled SVG emission: polylines and point clouds in world
//! coordinates, one file per artifact. No plotting dependency.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 45.0;

pub struct Svg {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    body: String,
}

impl Svg {
    /// World-coordinate window; y grows upward.
    pub fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let pad = 0.05 * (y_range.1 - y_range.0).max(1e-12);
        Svg {
            x0: x_range.0,
            x1: x_range.1,
            y0: y_range.0 - pad,
            y1: y_range.1 + pad,
            body: String::new(),
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut attr = String::new();
        for &(x, y) in pts {
            let _ = write!(attr, "{:.2},{:.2} ", self.sx(x), self.sy(y));
        }
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
            attr.trim_end()
        );
    }

    pub fn dots(&mut self, pts: &[(f64, f64)], color: &str, r: f64) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#,
                self.sx(x),
                self.sy(y)
            );
        }
    }

    pub fn vline(&mut self, x: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}" stroke-width="0.7" stroke-dasharray="4 3"/>"#,
            self.sx(x),
            self.sy(self.y0),
            self.sy(self.y1)
        );
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let axis = format!(
            r##"<rect x="{m}" y="{m}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888" stroke-width="1"/>
<text x="{m}" y="{ty}" font-size="11" fill="#444">x in [{x0}, {x1}], y in [{y0:.5}, {y1:.5}]</text>"##,
            m = MARGIN,
            w = WIDTH - 2.0 * MARGIN,
            h = HEIGHT - 2.0 * MARGIN,
            ty = HEIGHT - MARGIN / 3.0,
            x0 = self.x0,
            x1 = self.x1,
            y0 = self.y0,
            y1 = self.y1,
        );
        let doc = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
{axis}
{}
</svg>
"#,
            self.body
        );
        std::fs::write(path, doc)
    }
}
