//! Minimal SVG line plots.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const MARKER: f64 = 5.0;
const X_TICKS: usize = 8;

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Indices of points drawn with a cross.
    pub marked: &'a [usize],
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * span
    }

    fn py(&self, y: f64) -> f64 {
        let span = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * span
    }
}

fn extent(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot<'_> {
    pub fn render(&self) -> String {
        assert_eq!(self.x.len(), self.y.len(), "x and y lengths differ");
        let (x0, x1) = if self.x.is_empty() { (0.0, 1.0) } else { extent(self.x) };
        let (_, y_hi) = if self.y.is_empty() { (0.0, 1.0) } else { extent(self.y) };
        let y1 = y_hi.max(1.0).ceil();
        let f = Frame { x0, x1, y0: 0.0, y1 };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );

        let (left, right) = (f.px(x0), f.px(x1));
        let (bottom, top) = (f.py(0.0), f.py(y1));
        let _ = writeln!(
            s,
            r#"<path d="M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
        );
        for i in 0..=X_TICKS {
            let v = x0 + (x1 - x0) * i as f64 / X_TICKS as f64;
            let p = f.px(v);
            let _ = writeln!(
                s,
                r#"<line x1="{p:.2}" y1="{bottom:.2}" x2="{p:.2}" y2="{:.2}" stroke="black"/><text x="{p:.2}" y="{:.2}" text-anchor="middle">{v:.0}</text>"#,
                bottom + 5.0,
                bottom + 18.0
            );
        }
        let y_step = (y1 / 8.0).ceil().max(1.0);
        let mut v = 0.0;
        while v <= y1 {
            let p = f.py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{p:.2}" x2="{left:.2}" y2="{p:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.0}</text>"#,
                left - 5.0,
                left - 8.0,
                p + 4.0
            );
            v += y_step;
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 12.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (top + bottom) / 2.0,
            (top + bottom) / 2.0,
            escape(self.y_label)
        );

        let points: Vec<String> = self
            .x
            .iter()
            .zip(self.y)
            .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        for &i in self.marked {
            let (cx, cy) = (f.px(self.x[i]), f.py(self.y[i]));
            let _ = writeln!(
                s,
                r#"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="crimson" stroke-width="2"/>"#,
                cx - MARKER,
                cy - MARKER,
                cx + MARKER,
                cy + MARKER,
                cx - MARKER,
                cy + MARKER,
                cx + MARKER,
                cy - MARKER
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
