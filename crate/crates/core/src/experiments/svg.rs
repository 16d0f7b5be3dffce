//! Minimal standalone SVG line plots.

use std::fmt::Write as _;

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    /// `(x, y, half_error)`; `half_error` may be zero.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let tx = |v: f64| if self.log_x { v.ln() } else { v };
        let ty = |v: f64| if self.log_y { v.max(1e-300).ln() } else { v };
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y, e) in pts {
            x0 = x0.min(tx(x));
            x1 = x1.max(tx(x));
            let lo = if self.log_y { (y - e).max(y * 0.1) } else { y - e };
            y0 = y0.min(ty(lo));
            y1 = y1.max(ty(y + e));
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        let px = |v: f64| M + (tx(v) - x0) / (x1 - x0) * (W - 2.0 * M);
        let py = |v: f64| H - M - (ty(v) - y0) / (y1 - y0) * (H - 2.0 * M);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(s, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M);
        let _ = writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (vx, vy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let lx = if self.log_x { vx.exp() } else { vx };
            let ly = if self.log_y { vy.exp() } else { vy };
            let gx = M + f * (W - 2.0 * M);
            let gy = H - M - f * (H - 2.0 * M);
            let _ = writeln!(s, r#"<text x="{gx:.1}" y="{}" text-anchor="middle">{lx:.3}</text>"#, H - M + 16.0);
            let _ = writeln!(s, r#"<text x="{}" y="{gy:.1}" text-anchor="end">{ly:.3e}</text>"#, M - 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(&self.x_label));
        let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, H / 2.0, H / 2.0, esc(&self.y_label));
        for (i, se) in self.series.iter().enumerate() {
            let c = COLORS[i % COLORS.len()];
            let path: Vec<String> = se.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            for &(x, y, e) in &se.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(x), py(y));
                if e > 0.0 {
                    let lo = if self.log_y { (y - e).max(y * 0.1) } else { y - e };
                    let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{c}"/>"#, px(x), py(lo), py(y + e));
                }
            }
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, W - M - 150.0, M + 16.0 * i as f64, esc(&se.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let p = LinePlot {
            title: "a < b".into(),
            x_label: "n".into(),
            y_label: "err".into(),
            log_x: true,
            log_y: true,
            series: vec![Series { name: "s".into(), points: vec![(10.0, 0.1, 0.01), (100.0, 0.03, 0.0)] }],
        };
        let s = p.to_svg();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
    }
}
