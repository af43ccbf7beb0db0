//! Minimal SVG plotting for maps, curves and heat maps. Presentation only.

use std::fmt::Write as _;

const SIZE: f64 = 600.0;
const PAD: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
pub struct SvgStyle {
    pub stroke: &'static str,
    pub width: f64,
}

impl SvgStyle {
    pub fn palette(k: usize) -> Self {
        const COLORS: [&str; 8] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
        Self { stroke: COLORS[k % COLORS.len()], width: 1.0 }
    }
}

/// Plot of the box `[0, x_max] × [0, y_max]`.
pub struct Svg {
    x_max: f64,
    y_max: f64,
    body: String,
}

impl Svg {
    pub fn new(x_max: f64, y_max: f64, x_label: &str, y_label: &str) -> Self {
        let mut body = String::new();
        let total = SIZE + 2.0 * PAD;
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
        );
        let _ = writeln!(body, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{x_label}</text>"#,
            PAD + SIZE / 2.0,
            total - 12.0
        );
        let _ = writeln!(
            body,
            r#"<text x="14" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
            PAD + SIZE / 2.0,
            PAD + SIZE / 2.0
        );
        let _ = writeln!(
            body,
            r#"<text x="{PAD}" y="{}" font-size="11">0</text><text x="{}" y="{}" font-size="11" text-anchor="end">{x_max}</text><text x="{}" y="{}" font-size="11" text-anchor="end">{y_max}</text>"#,
            PAD + SIZE + 14.0,
            PAD + SIZE,
            PAD + SIZE + 14.0,
            PAD - 4.0,
            PAD + 4.0
        );
        Self { x_max, y_max, body }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (PAD + x / self.x_max * SIZE, PAD + SIZE - y / self.y_max * SIZE)
    }

    pub fn cell(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let (px, py) = self.map(x, y + h);
        let pw = w / self.x_max * SIZE;
        let ph = h / self.y_max * SIZE;
        let _ = writeln!(
            self.body,
            r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            pw + 0.05,
            ph + 0.05
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], style: SvgStyle) {
        if points.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (k, &(x, y)) in points.iter().enumerate() {
            let (px, py) = self.map(x.min(self.x_max * 1.05), y.min(self.y_max * 1.05));
            let _ = write!(d, "{}{px:.2},{py:.2}", if k == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            style.stroke, style.width
        );
    }

    pub fn marker(&mut self, x: f64, y: f64, label: &str) {
        let (px, py) = self.map(x, y);
        let _ = writeln!(
            self.body,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="black"/><text x="{:.2}" y="{:.2}" font-size="12">{label}</text>"#,
            px + 5.0,
            py - 5.0
        );
    }

    pub fn finish(mut self) -> String {
        let _ = writeln!(
            self.body,
            r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
        );
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Blue (negative) to white (zero) to red (positive), saturating at `limit`.
pub fn diverging_color(v: f64, limit: f64) -> String {
    let t = (v / limit).clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let k = -t;
        (255.0 * (1.0 - k), 255.0 * (1.0 - 0.6 * k), 255.0)
    } else {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}
